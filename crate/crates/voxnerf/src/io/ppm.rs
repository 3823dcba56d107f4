//! Binary PPM (P6, 8-bit) image I/O.

use std::fs;
use std::path::Path;

use crate::error::{Result, VoxError};
use crate::image::Image;

pub fn write_ppm(path: &Path, image: &Image) -> Result<()> {
    let mut bytes = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    bytes.extend_from_slice(&image.quantize());
    fs::write(path, bytes)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: &str) -> VoxError {
        VoxError::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    /// Skip whitespace and '#' comment lines.
    fn skip_space(&mut self) {
        while self.pos < self.data.len() {
            let b = self.data[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn integer(&mut self) -> Result<u32> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected integer"));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err("integer out of range"))
    }
}

pub fn read_ppm(path: &Path) -> Result<Image> {
    let data = fs::read(path)?;
    let mut cur = Cursor {
        data: &data,
        pos: 0,
    };
    if !data.starts_with(b"P6") {
        return Err(cur.err("not a P6 PPM"));
    }
    cur.pos = 2;
    let width = cur.integer()?;
    let height = cur.integer()?;
    let maxval = cur.integer()?;
    if maxval != 255 {
        return Err(cur.err("only maxval 255 supported"));
    }
    if cur.pos >= data.len() || !data[cur.pos].is_ascii_whitespace() {
        return Err(cur.err("expected whitespace before pixel data"));
    }
    cur.pos += 1;
    let need = width as usize * height as usize * 3;
    let rest = &data[cur.pos..];
    if rest.len() < need {
        return Err(cur.err(&format!(
            "truncated pixel data: have {}, need {need}",
            rest.len()
        )));
    }
    Ok(Image::from_bytes(width, height, &rest[..need]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    #[test]
    fn quantized_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        let mut rng = substream(61, &[0]);
        let mut img = Image::new(13, 7);
        for p in &mut img.pixels {
            *p = [rng.random(), rng.random(), rng.random()];
        }
        // pre-quantize so the 8-bit write is lossless
        let img = Image::from_bytes(13, 7, &img.quantize());
        write_ppm(&path, &img).unwrap();
        let back = read_ppm(&path).unwrap();
        assert_eq!(img, back);
        // byte-identical on rewrite
        let first = std::fs::read(&path).unwrap();
        write_ppm(&path, &back).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ppm");
        std::fs::write(&path, b"P6\n4 4\n255\n\x00\x01").unwrap();
        match read_ppm(&path) {
            Err(VoxError::Parse { offset, .. }) => assert!(offset > 0),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&path, b"P5\n4 4\n255\n").unwrap();
        assert!(read_ppm(&path).is_err());
    }

    #[test]
    fn comments_in_header_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ppm");
        let mut bytes = b"P6\n# comment line\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[10, 20, 30, 40, 50, 60]);
        std::fs::write(&path, bytes).unwrap();
        let img = read_ppm(&path).unwrap();
        assert_eq!(img.width, 2);
        assert_eq!(img.quantize(), vec![10, 20, 30, 40, 50, 60]);
    }
}
