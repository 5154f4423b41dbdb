//! Deterministic RAW preprocessing: green-averaged mosaic packing,
//! black-level subtraction, 2x2 binning, global digital gain with
//! exposure-ratio scaling, and range normalization.
//!
//! Denoising is not performed here; pipelines that ingest pre-denoised
//! frames record that fact in [`IspConfig::denoised_input`].

use ndarray::{Array3, ArrayView3, Zip};

#[derive(Debug, thiserror::Error)]
pub enum IspError {
    #[error("mosaic dimensions must be even, got {h}x{w}")]
    OddDimensions { h: usize, w: usize },
    #[error("black level {black} must be below white level {white}")]
    BadLevels { black: u32, white: u32 },
    #[error("mosaic value {value} exceeds white level {white}")]
    ValueAboveWhite { value: u16, white: u32 },
    #[error("exposure must be positive, got {0}")]
    NonPositiveExposure(f64),
    #[error("digital gain must be positive, got {0}")]
    NonPositiveGain(f64),
    #[error("input value {0} outside [0,1] beyond tolerance")]
    OutOfRange(f32),
}

/// Bayer color filter array layouts, by the colors of the top-left 2x2 block
/// in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CfaPattern {
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl CfaPattern {
    /// (row, col) offsets of R, G1, G2, B within a 2x2 block.
    fn offsets(self) -> [(usize, usize); 4] {
        match self {
            CfaPattern::Rggb => [(0, 0), (0, 1), (1, 0), (1, 1)],
            CfaPattern::Bggr => [(1, 1), (0, 1), (1, 0), (0, 0)],
            CfaPattern::Grbg => [(0, 1), (0, 0), (1, 1), (1, 0)],
            CfaPattern::Gbrg => [(1, 0), (0, 0), (1, 1), (0, 1)],
        }
    }
}

/// One RAW sensor frame: a single-channel mosaic plus calibration metadata.
#[derive(Debug, Clone)]
pub struct RawFrame {
    pub mosaic: ndarray::Array2<u16>,
    pub cfa_pattern: CfaPattern,
    pub black_level: u32,
    pub white_level: u32,
    pub exposure_seconds: f64,
}

impl RawFrame {
    pub fn validate(&self) -> Result<(), IspError> {
        let (h, w) = self.mosaic.dim();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(IspError::OddDimensions { h, w });
        }
        if self.black_level >= self.white_level {
            return Err(IspError::BadLevels {
                black: self.black_level,
                white: self.white_level,
            });
        }
        if let Some(&v) = self.mosaic.iter().find(|&&v| v as u32 > self.white_level) {
            return Err(IspError::ValueAboveWhite {
                value: v,
                white: self.white_level,
            });
        }
        if self.exposure_seconds <= 0.0 {
            return Err(IspError::NonPositiveExposure(self.exposure_seconds));
        }
        Ok(())
    }
}

/// Output value range of the normalizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueRange {
    /// [0, 1]
    Unit,
    /// [-1, 1]
    Symmetric,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct IspConfig {
    pub digital_gain: f64,
    pub target_range: ValueRange,
    pub bin: bool,
    /// Whether the ingested frames were externally denoised before this
    /// pipeline.
    pub denoised_input: bool,
}

impl Default for IspConfig {
    fn default() -> Self {
        IspConfig {
            digital_gain: 1.0,
            target_range: ValueRange::Symmetric,
            bin: true,
            denoised_input: false,
        }
    }
}

/// Converts one RAW mosaic into a half-resolution linear RGB image.
///
/// Per 2x2 CFA block the output pixel is `(R, (G1+G2)/2, B)` after
/// black-level subtraction, scaled by `1/(white - black)` and clipped to
/// [0, 1].
pub fn pack_green_average(raw: &RawFrame) -> Result<Array3<f32>, IspError> {
    raw.validate()?;
    let (h, w) = raw.mosaic.dim();
    let black = raw.black_level as f32;
    let scale = 1.0 / (raw.white_level - raw.black_level) as f32;
    let [r_off, g1_off, g2_off, b_off] = raw.cfa_pattern.offsets();
    let mut out = Array3::<f32>::zeros((h / 2, w / 2, 3));
    for by in 0..h / 2 {
        for bx in 0..w / 2 {
            let at = |off: (usize, usize)| raw.mosaic[(2 * by + off.0, 2 * bx + off.1)] as f32;
            let r = (at(r_off) - black) * scale;
            let g = ((at(g1_off) - black) + (at(g2_off) - black)) * 0.5 * scale;
            let b = (at(b_off) - black) * scale;
            out[(by, bx, 0)] = r.clamp(0.0, 1.0);
            out[(by, bx, 1)] = g.clamp(0.0, 1.0);
            out[(by, bx, 2)] = b.clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Averages each 2x2 spatial block per channel, halving resolution.
pub fn bin2x2(img: ArrayView3<'_, f32>) -> Result<Array3<f32>, IspError> {
    let (h, w, c) = img.dim();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(IspError::OddDimensions { h, w });
    }
    let mut out = Array3::<f32>::zeros((h / 2, w / 2, c));
    for y in 0..h / 2 {
        for x in 0..w / 2 {
            for ch in 0..c {
                let s = img[(2 * y, 2 * x, ch)]
                    + img[(2 * y, 2 * x + 1, ch)]
                    + img[(2 * y + 1, 2 * x, ch)]
                    + img[(2 * y + 1, 2 * x + 1, ch)];
                out[(y, x, ch)] = s * 0.25;
            }
        }
    }
    Ok(out)
}

/// Scales linear intensities by digital gain times the exposure ratio and
/// clips to [0, 1]. The exposure-ratio factor brings a short exposure up to
/// the brightness of its long counterpart.
pub fn apply_gain_and_ev(
    img: ArrayView3<'_, f32>,
    short_exposure: f64,
    long_exposure: f64,
    digital_gain: f64,
) -> Result<Array3<f32>, IspError> {
    if short_exposure <= 0.0 {
        return Err(IspError::NonPositiveExposure(short_exposure));
    }
    if long_exposure <= 0.0 {
        return Err(IspError::NonPositiveExposure(long_exposure));
    }
    if digital_gain <= 0.0 {
        return Err(IspError::NonPositiveGain(digital_gain));
    }
    let factor = (digital_gain * (long_exposure / short_exposure)) as f32;
    let mut out = img.to_owned();
    out.mapv_inplace(|v| (v * factor).clamp(0.0, 1.0));
    Ok(out)
}

/// Maps [0,1] input into the target range: identity for `Unit`,
/// `2x - 1` for `Symmetric`.
pub fn normalize(img: ArrayView3<'_, f32>, target: ValueRange) -> Result<Array3<f32>, IspError> {
    if let Some(&v) = img.iter().find(|&&v| !(-1e-6..=1.0 + 1e-6).contains(&v)) {
        return Err(IspError::OutOfRange(v));
    }
    let out = match target {
        ValueRange::Unit => img.to_owned(),
        ValueRange::Symmetric => img.mapv(|v| 2.0 * v - 1.0),
    };
    Ok(out)
}

/// Inverse of [`normalize`].
pub fn denormalize(img: ArrayView3<'_, f32>, source: ValueRange) -> Array3<f32> {
    match source {
        ValueRange::Unit => img.to_owned(),
        ValueRange::Symmetric => img.mapv(|v| (v + 1.0) * 0.5),
    }
}

/// Full preprocessing for one short-exposure RAW frame: pack, optional bin,
/// gain + exposure-ratio scaling, then normalization to the target range.
pub fn preprocess_short_frame(
    raw: &RawFrame,
    long_exposure: f64,
    cfg: &IspConfig,
) -> Result<Array3<f32>, IspError> {
    let packed = pack_green_average(raw)?;
    let binned = if cfg.bin {
        bin2x2(packed.view())?
    } else {
        packed
    };
    let gained = apply_gain_and_ev(
        binned.view(),
        raw.exposure_seconds,
        long_exposure,
        cfg.digital_gain,
    )?;
    normalize(gained.view(), cfg.target_range)
}
