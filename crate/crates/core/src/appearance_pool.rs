//! Mask-guided average pooling of feature maps into appearance queries.

use crate::error::{invalid, shape, Error, Result};
use crate::scalar::Scalar;
use crate::similarity::EmbeddingSet;

/// `height x width x channels` feature map, channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Empty("feature map"));
        }
        if values.len() != height * width * channels {
            return Err(shape(format!(
                "feature map {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
        })
    }

    /// Builds a map by evaluating `f(row, col)` for every pixel.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize) -> Vec<T>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                let px = f(r, c);
                if px.len() != channels {
                    return Err(shape(format!(
                        "pixel ({r}, {c}) has {} channels, expected {channels}",
                        px.len()
                    )));
                }
                values.extend(px);
            }
        }
        Self::new(height, width, channels, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[T] {
        let start = (row * self.width + col) * self.channels;
        &self.values[start..start + self.channels]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Per-pixel weights in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask<T> {
    height: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Scalar> InstanceMask<T> {
    pub fn new(height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != height * width {
            return Err(shape(format!(
                "mask {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some(v) = values
            .iter()
            .find(|v| !(v.is_finite() && **v >= T::zero() && **v <= T::one()))
        {
            return Err(invalid(format!("mask weight {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.width + col]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Hard 0/1 mask, set where the weight is at least 0.5.
    pub fn binarized(&self) -> Self {
        let t = T::lit(crate::dataset_io::BINARIZE_THRESHOLD);
        Self {
            height: self.height,
            width: self.width,
            values: self
                .values
                .iter()
                .map(|&v| if v >= t { T::one() } else { T::zero() })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PoolOptions {
    /// Threshold soft masks at 0.5 before pooling.
    pub binarize: bool,
}

/// Mask-weighted mean of the feature vectors; zero when the mask is empty.
pub fn masked_average_pool<T: Scalar>(f: &FeatureMap<T>, m: &InstanceMask<T>) -> Result<Vec<T>> {
    masked_average_pool_with(f, m, PoolOptions::default())
}

pub fn masked_average_pool_with<T: Scalar>(
    f: &FeatureMap<T>,
    m: &InstanceMask<T>,
    opts: PoolOptions,
) -> Result<Vec<T>> {
    if (f.height, f.width) != (m.height, m.width) {
        return Err(shape(format!(
            "feature map is {}x{}, mask is {}x{}",
            f.height, f.width, m.height, m.width
        )));
    }
    let binarized;
    let m = if opts.binarize {
        binarized = m.binarized();
        &binarized
    } else {
        m
    };
    let mut acc = vec![T::zero(); f.channels];
    let mut mass = T::zero();
    for (px, &w) in f.values.chunks_exact(f.channels).zip(&m.values) {
        if w == T::zero() {
            continue;
        }
        mass += w;
        for (a, &x) in acc.iter_mut().zip(px) {
            *a += w * x;
        }
    }
    if mass > T::zero() {
        for a in &mut acc {
            *a /= mass;
        }
    }
    Ok(acc)
}

/// One pooled row per mask.
pub fn pool_all_instances<T: Scalar>(
    f: &FeatureMap<T>,
    masks: &[InstanceMask<T>],
) -> Result<EmbeddingSet<T>> {
    let mut data = Vec::with_capacity(masks.len() * f.channels);
    for m in masks {
        data.extend(masked_average_pool(f, m)?);
    }
    EmbeddingSet::new(masks.len(), f.channels, data)
}
