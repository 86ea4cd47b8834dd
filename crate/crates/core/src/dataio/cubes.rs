//! Square patches around a center pixel with reflect padding at borders.
//! For a patch of extent `s` the center pixel lands at index `s / 2`.

use mivit_autodiff::Tensor;

use super::raster::ModalRaster;
use crate::error::{Error, Result};

/// Mirror an out-of-range index back into `[0, n)` without repeating the edge.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

fn check(raster: &ModalRaster, center: (usize, usize), size: usize) -> Result<()> {
    if center.0 >= raster.height || center.1 >= raster.width {
        return Err(Error::Data(format!(
            "center {center:?} is outside the {}x{} raster",
            raster.height, raster.width
        )));
    }
    let limit = 2 * raster.height.min(raster.width);
    if size == 0 || size > limit {
        return Err(Error::Data(format!(
            "unsupported cube size {size}: must be in 1..={limit} for a {}x{} raster",
            raster.height, raster.width
        )));
    }
    Ok(())
}

fn source(center: usize, size: usize, i: usize, n: usize) -> usize {
    reflect_index(center as isize - (size / 2) as isize + i as isize, n)
}

/// One `size × size × b` cube per requested size.
pub fn extract_cubes(raster: &ModalRaster, center: (usize, usize), sizes: &[usize]) -> Result<Vec<Tensor<f32>>> {
    sizes
        .iter()
        .map(|&s| {
            check(raster, center, s)?;
            let mut data = Vec::with_capacity(s * s * raster.bands);
            for i in 0..s {
                let r = source(center.0, s, i, raster.height);
                for j in 0..s {
                    let c = source(center.1, s, j, raster.width);
                    data.extend_from_slice(raster.pixel(r, c));
                }
            }
            Ok(Tensor::new(&[s, s, raster.bands], data)?)
        })
        .collect()
}

/// Cubes for many centers as a channel-first batch `[B, b, size, size]`.
pub fn batch_cubes(raster: &ModalRaster, centers: &[(usize, usize)], size: usize) -> Result<Tensor<f32>> {
    let b = raster.bands;
    let mut data = vec![0f32; centers.len() * b * size * size];
    for (n, &center) in centers.iter().enumerate() {
        check(raster, center, size)?;
        let base = n * b * size * size;
        for i in 0..size {
            let r = source(center.0, size, i, raster.height);
            for j in 0..size {
                let c = source(center.1, size, j, raster.width);
                for (band, &v) in raster.pixel(r, c).iter().enumerate() {
                    data[base + (band * size + i) * size + j] = v;
                }
            }
        }
    }
    Ok(Tensor::new(&[centers.len(), b, size, size], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_period() {
        let got: Vec<usize> = (-3..7).map(|i| reflect_index(i, 3)).collect();
        assert_eq!(got, vec![1, 2, 1, 0, 1, 2, 1, 0, 1, 2]);
        assert_eq!(reflect_index(-5, 1), 0);
    }

    #[test]
    fn shapes_and_center_convention() {
        let r = ModalRaster::new(6, 6, 1, (0..36).map(|v| v as f32).collect()).unwrap();
        let cubes = extract_cubes(&r, (3, 3), &[2, 4]).unwrap();
        assert_eq!(cubes[0].shape(), &[2, 2, 1]);
        assert_eq!(cubes[1].shape(), &[4, 4, 1]);
        assert_eq!(cubes[1].data()[2 * 4 + 2], r.at(3, 3, 0));
    }

    #[test]
    fn oversize_is_rejected() {
        let r = ModalRaster::new(3, 5, 1, vec![0.0; 15]).unwrap();
        assert!(extract_cubes(&r, (0, 0), &[7]).is_err());
        assert!(extract_cubes(&r, (0, 0), &[6]).is_ok());
        assert!(extract_cubes(&r, (3, 0), &[2]).is_err());
    }

    #[test]
    fn batch_layout_is_channel_first_transpose_of_cube() {
        let r = ModalRaster::new(5, 5, 2, (0..50).map(|v| v as f32).collect()).unwrap();
        let cube = &extract_cubes(&r, (1, 4), &[4]).unwrap()[0];
        let batch = batch_cubes(&r, &[(1, 4)], 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                for b in 0..2 {
                    assert_eq!(batch.data()[(b * 4 + i) * 4 + j], cube.data()[(i * 4 + j) * 2 + b]);
                }
            }
        }
    }
}
