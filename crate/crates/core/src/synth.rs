//! Deterministic synthetic corpus for tests and demos.
//!
//! Every frame is a smooth background with a soft elliptical "face". Fake
//! frames carry a high-frequency texture inside the face region whose
//! amplitude varies per frame, so the built-in mock detector separates most
//! of them from pristine frames and benign processing moves that separation.

use std::path::{Path, PathBuf};

use rand_core::RngCore;

use crate::buffer::{ImageBuffer, ImageIoError};
use crate::corpus::{CorpusError, Family, Label, Manifest, ManifestEntry};
use crate::seed::stage_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct MockVideo {
    pub video_id: String,
    pub family: Family,
    /// Texture amplitude for each frame; zero for pristine videos.
    pub amplitudes: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockCorpusSpec {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub videos: Vec<MockVideo>,
}

impl Default for MockCorpusSpec {
    /// One pristine video and one per manipulation family, six frames each.
    fn default() -> Self {
        let fake = |id: &str, family, amplitudes: [f32; 6]| MockVideo {
            video_id: id.into(),
            family,
            amplitudes: amplitudes.to_vec(),
        };
        Self {
            width: 64,
            height: 64,
            seed: 2019,
            videos: vec![
                MockVideo { video_id: "v000".into(), family: Family::Pristine, amplitudes: vec![0.0; 6] },
                fake("v001", Family::Deepfake, [0.12, 0.14, 0.17, 0.20, 0.12, 0.18]),
                fake("v002", Family::Faceswap, [0.04, 0.13, 0.15, 0.22, 0.10, 0.15]),
                fake("v003", Family::Face2face, [0.05, 0.11, 0.12, 0.17, 0.09, 0.14]),
                fake("v004", Family::Neuraltextures, [0.03, 0.11, 0.15, 0.25, 0.11, 0.16]),
            ],
        }
    }
}

fn uniform(rng: &mut impl RngCore) -> f32 {
    (rng.next_u32() >> 8) as f32 / (1u32 << 24) as f32
}

/// Renders one frame. Tint and face placement are drawn per frame, so frames
/// of one video differ slightly.
pub fn mock_frame(spec: &MockCorpusSpec, video: usize, frame: usize) -> ImageBuffer {
    let v = &spec.videos[video];
    let frame_id = format!("{}_{frame:03}", v.video_id);
    let mut rng = stage_rng(spec.seed, &frame_id, 0);
    let (w, h) = (spec.width as f32, spec.height as f32);

    let tint = [0.35 + 0.3 * uniform(&mut rng), 0.35 + 0.3 * uniform(&mut rng), 0.35 + 0.3 * uniform(&mut rng)];
    let skin = [0.78, 0.60, 0.50];
    let cx = w * (0.5 + 0.04 * (uniform(&mut rng) - 0.5));
    let cy = h * (0.5 + 0.04 * (uniform(&mut rng) - 0.5));
    let (rx, ry) = (w * 0.28, h * 0.36);
    let amplitude = v.amplitudes[frame];

    let texture: Vec<f32> = (0..spec.width * spec.height).map(|_| uniform(&mut rng) * 2.0 - 1.0).collect();

    ImageBuffer::from_fn(spec.width, spec.height, |x, y, c| {
        let (fx, fy) = (x as f32 + 0.5, y as f32 + 0.5);
        let background = tint[c] * (0.8 + 0.2 * fx / w) * (0.9 + 0.1 * fy / h);
        let d = ((fx - cx) / rx).powi(2) + ((fy - cy) / ry).powi(2);
        // soft edge over roughly three pixels
        let inside = (1.0 - (d.sqrt() - 1.0) * rx / 3.0).clamp(0.0, 1.0);
        let shade = skin[c] * (1.0 - 0.15 * (fy - cy) / ry);
        let base = background * (1.0 - inside) + shade * inside;
        base + amplitude * inside * texture[y * spec.width + x]
    })
    .expect("mock dimensions are valid")
}

/// Writes the corpus under `dir` (`frames/<video>/<index>.png` plus
/// `manifest.csv`) and returns the manifest.
pub fn write_mock_corpus(dir: &Path, spec: &MockCorpusSpec) -> Result<Manifest, CorpusError> {
    let mut entries = Vec::new();
    for (vi, v) in spec.videos.iter().enumerate() {
        let video_dir = dir.join("frames").join(&v.video_id);
        std::fs::create_dir_all(&video_dir)
            .map_err(|source| CorpusError::Io { path: video_dir.display().to_string(), source })?;
        for fi in 0..v.amplitudes.len() {
            let rel: PathBuf = ["frames", &v.video_id, &format!("{fi:03}.png")].iter().collect();
            mock_frame(spec, vi, fi).write_png(&dir.join(&rel)).map_err(CorpusError::from)?;
            entries.push(ManifestEntry {
                frame_id: format!("{}_{fi:03}", v.video_id),
                video_id: v.video_id.clone(),
                frame_index: fi as u64,
                label: if v.family == Family::Pristine { Label::Real } else { Label::Fake },
                family: v.family,
                path: rel,
            });
        }
    }
    let manifest = Manifest::new(entries)?;
    let path = dir.join("manifest.csv");
    std::fs::write(&path, manifest.to_csv()).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    Ok(manifest)
}

/// Whether every frame under `dir` matches what [`write_mock_corpus`] would produce.
pub fn matches_mock_corpus(dir: &Path, spec: &MockCorpusSpec) -> Result<bool, ImageIoError> {
    for (vi, v) in spec.videos.iter().enumerate() {
        for fi in 0..v.amplitudes.len() {
            let path = dir.join("frames").join(&v.video_id).join(format!("{fi:03}.png"));
            let on_disk = ImageBuffer::read(&path)?;
            if on_disk.to_rgb8() != mock_frame(spec, vi, fi).to_rgb8() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::high_frequency_energy;

    #[test]
    fn frames_are_deterministic() {
        let spec = MockCorpusSpec::default();
        assert_eq!(mock_frame(&spec, 1, 2), mock_frame(&spec, 1, 2));
        assert_ne!(mock_frame(&spec, 1, 2), mock_frame(&spec, 1, 3));
    }

    #[test]
    fn texture_raises_energy() {
        let spec = MockCorpusSpec::default();
        let real = high_frequency_energy(&mock_frame(&spec, 0, 0));
        let fake = high_frequency_energy(&mock_frame(&spec, 4, 3));
        assert!(real < 0.02, "{real}");
        assert!(fake > 0.1, "{fake}");
    }

    #[test]
    fn writes_manifest_and_frames() {
        let tmp = tempfile::tempdir().unwrap();
        let spec = MockCorpusSpec::default();
        let m = write_mock_corpus(tmp.path(), &spec).unwrap();
        assert_eq!(m.len(), 30);
        assert_eq!(crate::corpus::load_manifest(&tmp.path().join("manifest.csv")).unwrap(), m);
        assert!(matches_mock_corpus(tmp.path(), &spec).unwrap());
    }
}
