use crate::error::{Error, Result};

/// Real `height x width` grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RealGrid {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl RealGrid {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(
                "real grid",
                format!("{height}x{width} needs {} values, got {}", height * width, data.len()),
            ));
        }
        Ok(RealGrid {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        RealGrid {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.width + col] = v;
    }

    pub fn same_shape(&self, other: &RealGrid) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Rescales to `[0, 1]`; a constant grid maps to all zeros.
    pub fn min_max_normalized(&self) -> RealGrid {
        let lo = self.data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let data = if span > 0.0 && span.is_finite() {
            self.data.iter().map(|v| (v - lo) / span).collect()
        } else {
            vec![0.0; self.data.len()]
        };
        RealGrid {
            height: self.height,
            width: self.width,
            data,
        }
    }
}

/// Complex `height x width` grid stored as separate real and imaginary planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    pub height: usize,
    pub width: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexGrid {
    pub fn new(height: usize, width: usize, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        let n = height * width;
        if re.len() != n || im.len() != n {
            return Err(Error::shape(
                "complex grid",
                format!("{height}x{width} with re {} / im {} values", re.len(), im.len()),
            ));
        }
        Ok(ComplexGrid {
            height,
            width,
            re,
            im,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        let n = height * width;
        ComplexGrid {
            height,
            width,
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    pub fn from_real(g: &RealGrid) -> Self {
        ComplexGrid {
            height: g.height,
            width: g.width,
            re: g.data.clone(),
            im: vec![0.0; g.data.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn same_shape(&self, other: &ComplexGrid) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn real_part(&self) -> RealGrid {
        RealGrid {
            height: self.height,
            width: self.width,
            data: self.re.clone(),
        }
    }

    pub fn amplitude(&self, i: usize) -> f64 {
        self.re[i].hypot(self.im[i])
    }

    pub fn norm_sq(&self) -> f64 {
        self.re.iter().chain(&self.im).map(|v| v * v).sum()
    }

    /// Index of the cell at `(-u, -v)` in centered coordinates.
    pub fn mirror_index(&self, i: usize) -> usize {
        let (r, c) = (i / self.width, i % self.width);
        let mr = (self.height - r) % self.height;
        let mc = (self.width - c) % self.width;
        mr * self.width + mc
    }
}
