use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ops::conv2d_output_size;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FfnKind {
    /// Two 1×1 convolutions shared across positions.
    Pointwise,
    /// Fully connected layers over the flattened block.
    Dense,
}

/// Architecture hyperparameters of the student.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Transformer block count.
    pub m: usize,
    /// Attention heads per block.
    pub s: usize,
    /// Per-head projection width.
    pub d: usize,
    /// Transformer channel width.
    pub c: usize,
    /// Output head resolutions as (h, w), strictly increasing in area.
    pub head_resolutions: Vec<[usize; 2]>,
    pub input_frames: usize,
    pub frame_channels: usize,
    /// Input (height, width).
    pub input_resolution: [usize; 2],
    pub ffn_kind: FfnKind,
    pub downsample_filters: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            m: 5,
            s: 5,
            d: 64,
            c: 256,
            head_resolutions: vec![[1, 1], [4, 4], [16, 16]],
            input_frames: 3,
            frame_channels: 1,
            input_resolution: [64, 64],
            ffn_kind: FfnKind::Pointwise,
            downsample_filters: vec![16, 32, 64, 128, 256],
        }
    }
}

/// One downsampling convolution: 7×7 stride 1 unpadded first, 3×3 stride 2
/// pad 1 afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DownLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub input: [usize; 2],
    pub output: [usize; 2],
}

pub const HEAD_HIDDEN: usize = 64;

impl ModelConfig {
    pub fn r(&self) -> usize {
        self.head_resolutions.len()
    }

    pub fn input_channels(&self) -> usize {
        self.input_frames * self.frame_channels
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.s == 0 || self.d == 0 || self.c == 0 {
            return bad("s, d and c must be positive".into());
        }
        if self.input_frames == 0 || self.frame_channels == 0 {
            return bad("input_frames and frame_channels must be positive".into());
        }
        if self.head_resolutions.is_empty() {
            return bad("at least one head resolution is required".into());
        }
        if self.head_resolutions.iter().any(|r| r[0] == 0 || r[1] == 0) {
            return bad("head resolutions must be positive".into());
        }
        let areas: Vec<usize> = self.head_resolutions.iter().map(|r| r[0] * r[1]).collect();
        if areas.windows(2).any(|w| w[0] >= w[1]) {
            return bad("head resolutions must be strictly increasing in area".into());
        }
        match self.downsample_filters.last() {
            None => return bad("downsample_filters must not be empty".into()),
            Some(&last) if last != self.c => {
                return bad(format!("last downsample filter count {last} must equal c = {}", self.c));
            }
            _ => {}
        }
        if self.downsample_filters.contains(&0) {
            return bad("downsample filter counts must be positive".into());
        }
        self.down_layers().map(|_| ())
    }

    /// Geometry of the downsampling block, erroring on the first layer the
    /// input cannot pass through.
    pub fn down_layers(&self) -> Result<Vec<DownLayer>> {
        let mut size = self.input_resolution;
        let mut cin = self.input_channels();
        let mut out = Vec::new();
        for (i, &f) in self.downsample_filters.iter().enumerate() {
            let (kernel, stride, padding) = if i == 0 { (7, 1, 0) } else { (3, 2, 1) };
            let too_small = || Error::ResolutionTooSmall {
                layer: format!("enc.conv{i}"),
                height: self.input_resolution[0],
                width: self.input_resolution[1],
            };
            let h = conv2d_output_size(size[0], kernel, stride, padding).ok_or_else(too_small)?;
            let w = conv2d_output_size(size[1], kernel, stride, padding).ok_or_else(too_small)?;
            out.push(DownLayer {
                in_channels: cin,
                out_channels: f,
                kernel,
                stride,
                padding,
                input: size,
                output: [h, w],
            });
            size = [h, w];
            cin = f;
        }
        Ok(out)
    }

    /// Spatial size of the latent P.
    pub fn latent_size(&self) -> Result<[usize; 2]> {
        Ok(self.down_layers()?.last().map(|l| l.output).unwrap_or(self.input_resolution))
    }

    /// Query and key/value token counts of one attention head.
    pub fn token_counts(&self) -> Result<(usize, usize)> {
        let [h, w] = self.latent_size()?;
        let hk = conv2d_output_size(h, 3, 2, 1).unwrap_or(1);
        let wk = conv2d_output_size(w, 3, 2, 1).unwrap_or(1);
        Ok((h * w, hk * wk))
    }
}
