use num_traits::Float;

use crate::error::{Error, Result};

/// Channel-major stack of equally sized planes.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorStack<T = f32> {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Float> TensorStack<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        TensorStack {
            channels,
            height,
            width,
            values: vec![T::zero(); channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != channels * height * width {
            return Err(Error::invalid(format!(
                "tensor of {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tensor values must be finite"));
        }
        Ok(TensorStack {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.values[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.values[(c * self.height + y) * self.width + x]
    }

    pub fn cast<U: Float>(&self) -> TensorStack<U> {
        TensorStack {
            channels: self.channels,
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|v| U::from(*v).expect("float cast")).collect(),
        }
    }

    /// Spatial window `[y, y + h) x [x, x + w)` of every channel.
    pub fn crop(&self, y: usize, x: usize, h: usize, w: usize) -> TensorStack<T> {
        assert!(y + h <= self.height && x + w <= self.width, "crop outside tensor");
        let mut values = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            for r in y..y + h {
                let row = (c * self.height + r) * self.width;
                values.extend_from_slice(&self.values[row + x..row + x + w]);
            }
        }
        TensorStack {
            channels: self.channels,
            height: h,
            width: w,
            values,
        }
    }
}
