use crate::error::{Error, Result};

/// One co-registered image, stored pixel-interleaved as `h × w × b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalRaster {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub data: Vec<f32>,
}

impl ModalRaster {
    pub fn new(height: usize, width: usize, bands: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::Data(format!("raster extents must be positive, got {height}x{width}x{bands}")));
        }
        if data.len() != height * width * bands {
            return Err(Error::Data(format!(
                "raster {height}x{width}x{bands} needs {} values, got {}",
                height * width * bands,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("raster value {i} is not finite")));
        }
        Ok(Self { height, width, bands, data })
    }

    pub fn at(&self, row: usize, col: usize, band: usize) -> f32 {
        self.data[(row * self.width + col) * self.bands + band]
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let o = (row * self.width + col) * self.bands;
        &self.data[o..o + self.bands]
    }

    /// Rescales every band to `[0, 1]` by its min and max over the raster.
    /// Constant bands map to 0.
    pub fn normalize_min_max(&mut self) {
        for b in 0..self.bands {
            let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
            for v in self.data.iter().skip(b).step_by(self.bands) {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
            let span = hi - lo;
            for v in self.data.iter_mut().skip(b).step_by(self.bands) {
                *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
            }
        }
    }
}

/// Per-pixel class ids, `-1` for unlabeled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRaster {
    pub height: usize,
    pub width: usize,
    pub data: Vec<i32>,
}

impl LabelRaster {
    pub fn new(height: usize, width: usize, data: Vec<i32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Data(format!(
                "label plane {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v < -1) {
            return Err(Error::Data(format!("label {v} is below -1")));
        }
        Ok(Self { height, width, data })
    }

    pub fn at(&self, row: usize, col: usize) -> i32 {
        self.data[row * self.width + col]
    }

    /// Number of classes implied by the largest label.
    pub fn num_classes(&self) -> usize {
        self.data.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_maps_each_band_to_unit_interval() {
        let mut r = ModalRaster::new(1, 3, 2, vec![1.0, 5.0, 3.0, 5.0, 5.0, 5.0]).unwrap();
        r.normalize_min_max();
        assert_eq!(r.data, vec![0.0, 0.0, 0.5, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn rejects_non_finite_and_bad_lengths() {
        assert!(ModalRaster::new(1, 1, 1, vec![f32::NAN]).is_err());
        assert!(ModalRaster::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(LabelRaster::new(1, 2, vec![0, -2]).is_err());
    }
}
