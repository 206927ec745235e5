//! Weighted overlap-add filterbank with square-root periodic Hann windows
//! for analysis and synthesis, plus float WAV input/output.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64, ZERO};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WolaConfig {
    pub frame_len: usize,
    /// Fraction of a frame shared with the next one.
    pub overlap: f64,
}

impl Default for WolaConfig {
    fn default() -> Self {
        Self {
            frame_len: 1024,
            overlap: 0.5,
        }
    }
}

impl WolaConfig {
    pub fn hop(&self) -> usize {
        (self.frame_len as f64 * (1.0 - self.overlap)).round() as usize
    }

    pub fn bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Frames that fit completely in `samples`.
    pub fn frames(&self, samples: usize) -> usize {
        if samples < self.frame_len {
            0
        } else {
            1 + (samples - self.frame_len) / self.hop()
        }
    }

    /// The squared window must overlap-add to a constant, which needs an
    /// even frame length and a hop dividing it at least twice.
    pub fn validate(&self) -> Result<()> {
        let l = self.frame_len;
        let hop = self.hop();
        if l < 4 || l % 2 != 0 {
            return Err(Error::Config(format!("WOLA frame length {l} must be even and at least 4")));
        }
        if hop == 0 || l % hop != 0 || l / hop < 2 {
            return Err(Error::Config(format!(
                "WOLA overlap {} gives hop {hop}, which must divide frame length {l} at least twice",
                self.overlap
            )));
        }
        Ok(())
    }

    /// Square root of the periodic Hann window.
    pub fn window(&self) -> Vec<f64> {
        let l = self.frame_len as f64;
        (0..self.frame_len)
            .map(|n| (0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / l).cos()).sqrt())
            .collect()
    }

    /// Gain restoring unit overlap-add of the squared window.
    fn ola_gain(&self) -> f64 {
        2.0 * self.hop() as f64 / self.frame_len as f64
    }
}

/// Short-time spectra: one `channels x frames` matrix per frequency bin.
#[derive(Clone, Debug, PartialEq)]
pub struct Stft {
    pub config: WolaConfig,
    pub bins: Vec<CMat>,
}

impl Stft {
    pub fn channels(&self) -> usize {
        self.bins.first().map_or(0, |b| b.nrows())
    }

    pub fn frames(&self) -> usize {
        self.bins.first().map_or(0, |b| b.ncols())
    }

    /// Vector of all channels at bin `f`, frame `l`, as a column matrix.
    pub fn frame_vector(&self, f: usize, l: usize) -> CMat {
        self.bins[f].columns(l, 1).into_owned()
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(len: usize) -> Plans {
    let mut planner = FftPlanner::new();
    Plans {
        forward: planner.plan_fft_forward(len),
        inverse: planner.plan_fft_inverse(len),
    }
}

/// Analyse each row of `signal` (`channels x samples`).
pub fn analyze(signal: &DMatrix<f64>, config: &WolaConfig) -> Result<Stft> {
    config.validate()?;
    let frames = config.frames(signal.ncols());
    if frames == 0 {
        return Err(Error::EmptyInput("signal shorter than one WOLA frame"));
    }
    let (l, hop, nb) = (config.frame_len, config.hop(), config.bins());
    let window = config.window();
    let fft = plans(l).forward;
    let mut bins = vec![CMat::zeros(signal.nrows(), frames); nb];
    let mut buf = vec![ZERO; l];
    for ch in 0..signal.nrows() {
        for frame in 0..frames {
            let start = frame * hop;
            for n in 0..l {
                buf[n] = C64::new(window[n] * signal[(ch, start + n)], 0.0);
            }
            fft.process(&mut buf);
            for (f, bin) in bins.iter_mut().enumerate() {
                bin[(ch, frame)] = buf[f];
            }
        }
    }
    Ok(Stft {
        config: config.clone(),
        bins,
    })
}

/// Overlap-add resynthesis. The result has `(frames - 1) * hop + frame_len`
/// samples per channel; samples covered by fewer than `frame_len / hop`
/// frames at both ends are attenuated.
pub fn synthesize(stft: &Stft) -> Result<DMatrix<f64>> {
    let config = &stft.config;
    config.validate()?;
    let (l, hop, nb) = (config.frame_len, config.hop(), config.bins());
    if stft.bins.len() != nb {
        return Err(Error::dim("WOLA synthesis bins", nb, stft.bins.len()));
    }
    let (channels, frames) = (stft.channels(), stft.frames());
    if frames == 0 {
        return Err(Error::EmptyInput("no frames to synthesize"));
    }
    let window = config.window();
    let ifft = plans(l).inverse;
    let scale = config.ola_gain() / l as f64;
    let mut out = DMatrix::<f64>::zeros(channels, (frames - 1) * hop + l);
    let mut buf = vec![ZERO; l];
    for ch in 0..channels {
        for frame in 0..frames {
            for f in 0..nb {
                buf[f] = stft.bins[f][(ch, frame)];
            }
            // Real signals: the upper half mirrors the lower half.
            for f in 1..l / 2 {
                buf[l - f] = buf[f].conj();
            }
            buf[0].im = 0.0;
            buf[l / 2].im = 0.0;
            ifft.process(&mut buf);
            let start = frame * hop;
            for n in 0..l {
                out[(ch, start + n)] += scale * window[n] * buf[n].re;
            }
        }
    }
    Ok(out)
}

/// Write `channels x samples` audio as 32-bit float WAV.
pub fn write_wav(path: &Path, signal: &DMatrix<f64>, sample_rate: u32) -> Result<()> {
    let channels = u16::try_from(signal.nrows())
        .map_err(|_| Error::Config(format!("{} channels exceed the WAV limit", signal.nrows())))?;
    let spec = hound::WavSpec {
        channels,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for t in 0..signal.ncols() {
        for ch in 0..signal.nrows() {
            writer.write_sample(signal[(ch, t)] as f32)?;
        }
    }
    writer.finalize()?;
    Ok(())
}

/// Read a float or integer WAV file into `channels x samples`, scaled to
/// `[-1, 1)` for integer formats. Returns the sample rate as well.
pub fn read_wav(path: &Path) -> Result<(DMatrix<f64>, u32)> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let full = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / full))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let n = samples.len() / channels.max(1);
    Ok((DMatrix::from_fn(channels, n, |ch, t| samples[t * channels + ch]), spec.sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn noise(channels: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(channels, n, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn window_squares_overlap_add_to_one() {
        for overlap in [0.5, 0.75] {
            let cfg = WolaConfig { frame_len: 64, overlap };
            let w = cfg.window();
            let hop = cfg.hop();
            for n in 0..hop {
                let s: f64 = (0..64 / hop).map(|r| w[n + r * hop].powi(2)).sum();
                assert!((s * cfg.ola_gain() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_interior() {
        let cfg = WolaConfig::default();
        let x = noise(2, 16_384, 1);
        let y = synthesize(&analyze(&x, &cfg).unwrap()).unwrap();
        let l = cfg.frame_len;
        for ch in 0..2 {
            for t in l..y.ncols() - l {
                assert!((y[(ch, t)] - x[(ch, t)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let cfg = WolaConfig { frame_len: 32, overlap: 0.5 };
        let stft = analyze(&DMatrix::zeros(1, 200), &cfg).unwrap();
        assert!(stft.bins.iter().all(|b| b.iter().all(|z| *z == ZERO)));
        assert!(synthesize(&stft).unwrap().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn bin_centred_sinusoid_peaks_in_its_bin() {
        let cfg = WolaConfig { frame_len: 256, overlap: 0.5 };
        let k0 = 37;
        let x = DMatrix::from_fn(1, 2048, |_, t| {
            (2.0 * std::f64::consts::PI * k0 as f64 * t as f64 / 256.0).cos()
        });
        let stft = analyze(&x, &cfg).unwrap();
        for l in 0..stft.frames() {
            let mags: Vec<f64> = (0..cfg.bins()).map(|f| stft.bins[f][(0, l)].norm_sqr()).collect();
            let total: f64 = mags.iter().sum();
            let argmax = (0..mags.len()).max_by(|a, b| mags[*a].total_cmp(&mags[*b])).unwrap();
            assert_eq!(argmax, k0);
            let lobe: f64 = mags[k0 - 1..=k0 + 1].iter().sum();
            assert!(lobe > 0.9 * total);
        }
    }

    #[test]
    fn analysis_is_linear() {
        let cfg = WolaConfig { frame_len: 64, overlap: 0.5 };
        let (a, b) = (noise(1, 500, 2), noise(1, 500, 3));
        let sa = analyze(&a, &cfg).unwrap();
        let sb = analyze(&b, &cfg).unwrap();
        let sab = analyze(&(&a * 2.0 - &b * 0.5), &cfg).unwrap();
        for f in 0..cfg.bins() {
            let expect = &sa.bins[f] * C64::new(2.0, 0.0) - &sb.bins[f] * C64::new(0.5, 0.0);
            assert!((&sab.bins[f] - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn constant_gain_scales_output() {
        let cfg = WolaConfig { frame_len: 128, overlap: 0.5 };
        let x = noise(1, 4096, 4);
        let mut stft = analyze(&x, &cfg).unwrap();
        for bin in &mut stft.bins {
            *bin *= C64::new(0.25, 0.0);
        }
        let y = synthesize(&stft).unwrap();
        for t in 128..y.ncols() - 128 {
            assert!((y[(0, t)] - 0.25 * x[(0, t)]).abs() < 1e-10);
        }
    }

    #[test]
    fn short_signal_and_bad_overlap_are_rejected() {
        let cfg = WolaConfig::default();
        assert!(matches!(analyze(&DMatrix::zeros(1, 100), &cfg), Err(Error::EmptyInput(_))));
        let bad = WolaConfig { frame_len: 100, overlap: 0.3 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let x = noise(3, 100, 5) * 0.1;
        write_wav(&path, &x, 16_000).unwrap();
        let (y, fs) = read_wav(&path).unwrap();
        assert_eq!(fs, 16_000);
        assert_eq!(y.shape(), x.shape());
        assert!((y - x).abs().max() < 1e-7);
    }
}
