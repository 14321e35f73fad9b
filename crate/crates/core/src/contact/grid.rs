//! Quarter-resolution feature grids and windowed pooling.

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::Real;

/// Downsampling factor between image pixels and grid cells.
pub const GRID_STRIDE: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub row: usize,
    pub col: usize,
}

/// Dense `height x width x channels` array, row-major with channels last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct FeatureGrid<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> FeatureGrid<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid("feature grid dimensions must be positive"));
        }
        if data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "feature grid {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("feature grid contains non-finite values"));
        }
        Ok(Self { height, width, channels, data })
    }

    /// Grid sized for an image of `width x height` pixels.
    pub fn for_image(image_width: u32, image_height: u32, channels: usize, data: Vec<T>) -> Result<Self> {
        let (w, h) = grid_size(image_width, image_height);
        Self::new(h, w, channels, data)
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> &[T] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }
}

/// Grid `(width, height)` for an image, at least one cell each way.
pub fn grid_size(image_width: u32, image_height: u32) -> (usize, usize) {
    (
        (image_width / GRID_STRIDE).max(1) as usize,
        (image_height / GRID_STRIDE).max(1) as usize,
    )
}

/// Grid cell a world point projects to: pixel coordinates divided by the
/// stride, rounded to the nearest cell and clamped to the grid.
pub fn project_point<T: Real>(point: &Vec3<T>, camera: &Camera<T>) -> Result<GridCell> {
    let [u, v] = camera.project(point)?;
    let (w, h) = grid_size(camera.width, camera.height);
    let stride = T::lit(GRID_STRIDE as f64);
    let cell = |x: T, n: usize| -> usize {
        let r = (x / stride).round();
        if r <= T::zero() {
            0
        } else {
            r.to_usize().unwrap_or(usize::MAX).min(n - 1)
        }
    };
    Ok(GridCell { row: cell(v, h), col: cell(u, w) })
}

/// Mean feature over the `k x k` window centred on `cell`; neighbors outside
/// the grid are replaced by the nearest border cell.
pub fn window_pool<T: Real>(grid: &FeatureGrid<T>, cell: GridCell, k: usize) -> Result<Vec<T>> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::invalid(format!("window size must be odd and positive, got {k}")));
    }
    if cell.row >= grid.height || cell.col >= grid.width {
        return Err(Error::invalid(format!(
            "cell ({}, {}) outside {}x{} grid",
            cell.row, cell.col, grid.height, grid.width
        )));
    }
    let half = (k / 2) as isize;
    let clamp = |x: isize, n: usize| x.clamp(0, n as isize - 1) as usize;
    let mut acc = vec![T::zero(); grid.channels];
    for dr in -half..=half {
        let r = clamp(cell.row as isize + dr, grid.height);
        for dc in -half..=half {
            let c = clamp(cell.col as isize + dc, grid.width);
            for (a, &v) in acc.iter_mut().zip(grid.get(r, c)) {
                *a = *a + v;
            }
        }
    }
    let n = T::from_usize(k * k).expect("window size fits scalar");
    Ok(acc.into_iter().map(|a| a / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_by_three_center_mean() {
        let g = FeatureGrid::new(3, 3, 1, (1..=9).map(f64::from).collect()).unwrap();
        assert_eq!(window_pool(&g, GridCell { row: 1, col: 1 }, 3).unwrap(), vec![5.0]);
    }

    #[test]
    fn unit_window_is_lookup() {
        let g = FeatureGrid::new(2, 3, 2, (0..12).map(f64::from).collect()).unwrap();
        for row in 0..2 {
            for col in 0..3 {
                assert_eq!(window_pool(&g, GridCell { row, col }, 1).unwrap(), g.get(row, col));
            }
        }
    }

    #[test]
    fn constant_grid_pools_to_constant() {
        let g = FeatureGrid::new(4, 5, 1, vec![2.5; 20]).unwrap();
        for k in [1, 3, 5, 7, 9] {
            assert_eq!(window_pool(&g, GridCell { row: 0, col: 4 }, k).unwrap(), vec![2.5]);
        }
    }

    #[test]
    fn even_window_and_bad_cell_are_rejected() {
        let g = FeatureGrid::new(2, 2, 1, vec![0.0; 4]).unwrap();
        assert!(window_pool(&g, GridCell { row: 0, col: 0 }, 2).is_err());
        assert!(window_pool(&g, GridCell { row: 2, col: 0 }, 1).is_err());
        assert!(FeatureGrid::new(0, 2, 1, Vec::<f64>::new()).is_err());
        assert!(FeatureGrid::new(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn projection_to_grid() {
        let cam = Camera::new(500.0, 500.0, 320.0, 240.0, 640, 480);
        let c = project_point(&Vec3::new(0.0, 0.0, 2.0), &cam).unwrap();
        assert_eq!(c, GridCell { row: 60, col: 80 });
        let far = project_point(&Vec3::new(100.0, -100.0, 1.0), &cam).unwrap();
        assert_eq!(far, GridCell { row: 0, col: 159 });
        assert!(project_point(&Vec3::new(0.0, 0.0, -1.0), &cam).is_err());
    }
}
