use crate::{Error, Result};

/// Height x width x channel array stored row-major with channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::ShapeMismatch(format!(
                "tensor extents must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {height}x{width}x{channels} tensor",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(
                "tensor holds a non-finite value".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    /// Interleaves equally sized planes into one tensor, one channel per plane.
    pub fn from_planes(height: usize, width: usize, planes: &[&[f64]]) -> Result<Self> {
        let n = height * width;
        if let Some(p) = planes.iter().find(|p| p.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "plane of {} values for a {height}x{width} grid",
                p.len()
            )));
        }
        let c = planes.len();
        let mut data = vec![0.0; n * c];
        for (ch, plane) in planes.iter().enumerate() {
            for (i, &v) in plane.iter().enumerate() {
                data[i * c + ch] = v;
            }
        }
        Self::new(height, width, c, data)
    }

    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
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

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// `size x size` crop with its top-left corner at `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, size_y: usize, size_x: usize) -> Result<Tensor3> {
        if y0 + size_y > self.height || x0 + size_x > self.width {
            return Err(Error::ShapeMismatch(format!(
                "crop {size_y}x{size_x} at ({y0},{x0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(size_y * size_x * c);
        for y in y0..y0 + size_y {
            let start = (y * self.width + x0) * c;
            data.extend_from_slice(&self.data[start..start + size_x * c]);
        }
        Ok(Self::from_raw(size_y, size_x, c, data))
    }

    /// Stacks the channels of `self` followed by those of `other`.
    pub fn concat_channels(&self, other: &Tensor3) -> Result<Tensor3> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::ShapeMismatch(format!(
                "cannot concatenate {}x{} with {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let c = self.channels + other.channels;
        let mut data = Vec::with_capacity(self.height * self.width * c);
        for (a, b) in self
            .data
            .chunks_exact(self.channels)
            .zip(other.data.chunks_exact(other.channels))
        {
            data.extend_from_slice(a);
            data.extend_from_slice(b);
        }
        Ok(Self::from_raw(self.height, self.width, c, data))
    }
}
