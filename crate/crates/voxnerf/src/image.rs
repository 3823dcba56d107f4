//! In-memory image and depth-map buffers, row-major, values in [0,1].

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f64; 3]>,
}

impl Image {
    pub fn new(width: u32, height: u32) -> Image {
        Image {
            width,
            height,
            pixels: vec![[0.0; 3]; (width * height) as usize],
        }
    }

    pub fn idx(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    pub fn get(&self, x: u32, y: u32) -> [f64; 3] {
        self.pixels[self.idx(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, c: [f64; 3]) {
        let i = self.idx(x, y);
        self.pixels[i] = c;
    }

    /// Grayscale by channel mean.
    pub fn to_gray(&self) -> Vec<f64> {
        self.pixels
            .iter()
            .map(|p| (p[0] + p[1] + p[2]) / 3.0)
            .collect()
    }

    /// 8-bit quantization used for PPM output.
    pub fn quantize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() * 3);
        for p in &self.pixels {
            for c in p {
                out.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        out
    }

    pub fn from_bytes(width: u32, height: u32, bytes: &[u8]) -> Image {
        let pixels = bytes
            .chunks_exact(3)
            .map(|c| {
                [
                    c[0] as f64 / 255.0,
                    c[1] as f64 / 255.0,
                    c[2] as f64 / 255.0,
                ]
            })
            .collect();
        Image {
            width,
            height,
            pixels,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    /// Meters; entries are meaningful only where `valid` is set.
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32) -> DepthMap {
        DepthMap {
            width,
            height,
            data: vec![0.0; (width * height) as usize],
            valid: vec![false; (width * height) as usize],
        }
    }
}
