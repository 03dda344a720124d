//! Raw-pixel baseline: per-frame mean luma summarized into 8 numbers.

use super::explain::ls_slope;
use super::PredictorError;
use crate::ingest::Frame;
use crate::sampler::to_gray;

pub const JUNK_NAMES: [&str; 8] = ["mean", "std", "min", "max", "first", "last", "max_abs_diff", "slope"];

pub fn frame_mean_luma(frame: &Frame) -> f64 {
    let g = to_gray(frame);
    g.luma.iter().sum::<f64>() / g.luma.len() as f64
}

/// `[mean, std, min, max, first, last, max |diff|, slope]` of the per-frame
/// mean lumas; std is the population deviation and slope is per frame.
pub fn junk_baseline_features(frames: &[Frame]) -> Result<[f64; 8], PredictorError> {
    if frames.is_empty() {
        return Err(PredictorError::EmptyFrameSequence);
    }
    let m: Vec<f64> = frames.iter().map(frame_mean_luma).collect();
    let n = m.len() as f64;
    let mean = m.iter().sum::<f64>() / n;
    let std = (m.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let min = m.iter().copied().fold(f64::INFINITY, f64::min);
    let max = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_diff = m.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let t: Vec<f64> = (0..m.len()).map(|i| i as f64).collect();
    Ok([mean, std, min, max, m[0], m[m.len() - 1], max_diff, ls_slope(&t, &m)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solid(v: u8) -> Frame {
        Frame::new(4, 2, vec![v; 24], 0.0).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(
            junk_baseline_features(&[solid(0), solid(0), solid(0)]).unwrap(),
            [0.0; 8]
        );
        let j = junk_baseline_features(&[solid(0), solid(255)]).unwrap();
        assert!((j[0] - 127.5).abs() < 1e-9);
        assert!((j[6] - 255.0).abs() < 1e-9);
        assert!((j[7] - 255.0).abs() < 1e-9);
        let j = junk_baseline_features(&vec![solid(90); 5]).unwrap();
        assert_eq!((j[1], j[7]), (0.0, 0.0));
        assert_eq!(
            junk_baseline_features(&[]).unwrap_err(),
            PredictorError::EmptyFrameSequence
        );
    }
}
