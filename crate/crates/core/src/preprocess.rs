//! Turns an RGB image into the network's input tensor.

use image::imageops::{self, FilterType};
use image::RgbImage;

use crate::config::{ChannelOrder, InputSpec, Layout};
use crate::corpus::ImageRecord;

/// Dense network input for a single image (batch dimension omitted).
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor {
    pub layout: Layout,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl InputTensor {
    /// Shape including the leading batch dimension of 1.
    pub fn batched_shape(&self) -> [usize; 4] {
        match self.layout {
            Layout::Nchw => [1, 3, self.height, self.width],
            Layout::Nhwc => [1, self.height, self.width, 3],
        }
    }

    /// Value of channel `c` (in model channel order) at row `i`, column `j`.
    pub fn get(&self, c: usize, i: usize, j: usize) -> f32 {
        match self.layout {
            Layout::Nchw => self.data[(c * self.height + i) * self.width + j],
            Layout::Nhwc => self.data[(i * self.width + j) * 3 + c],
        }
    }
}

/// Bilinear resize to the configured input size (skipped when the image is
/// already that size), reorder channels, scale and normalise.
pub fn preprocess(img: &ImageRecord, spec: &InputSpec) -> InputTensor {
    let (h, w) = (spec.height, spec.width);
    let src = img.pixels();
    let resized;
    let pixels: &RgbImage = if src.height() as usize == h && src.width() as usize == w {
        src
    } else {
        resized = imageops::resize(src, w as u32, h as u32, FilterType::Triangle);
        &resized
    };

    let source_channel = match spec.channel_order {
        ChannelOrder::Rgb => [0, 1, 2],
        ChannelOrder::Bgr => [2, 1, 0],
    };
    let mut data = vec![0f32; 3 * h * w];
    for (j, i, px) in pixels.enumerate_pixels() {
        let (i, j) = (i as usize, j as usize);
        for (c, &src_c) in source_channel.iter().enumerate() {
            let v = (px.0[src_c] as f32 * spec.scale - spec.mean[c]) / spec.std[c];
            let idx = match spec.layout {
                Layout::Nchw => (c * h + i) * w + j,
                Layout::Nhwc => (i * w + j) * 3 + c,
            };
            data[idx] = v;
        }
    }
    InputTensor {
        layout: spec.layout,
        height: h,
        width: w,
        data,
    }
}
