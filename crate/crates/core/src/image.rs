/// Row-major RGB float image, top-left origin.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            rgb: vec![0.0; 3 * width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: [f64; 3]) -> Self {
        let mut img = Self::new(width, height);
        for px in img.rgb.chunks_exact_mut(3) {
            px.copy_from_slice(&value);
        }
        img
    }

    pub fn from_rgb(width: usize, height: usize, rgb: Vec<f64>) -> Option<Self> {
        (rgb.len() == 3 * width * height).then_some(Self { width, height, rgb })
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, value: [f64; 3]) {
        let i = 3 * (y * self.width + x);
        self.rgb[i..i + 3].copy_from_slice(&value);
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Largest per-channel absolute difference. Shapes must match.
    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        assert!(self.same_shape(other), "image shapes differ");
        self.rgb
            .iter()
            .zip(&other.rgb)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.rgb.iter().all(|v| v.is_finite())
    }
}
