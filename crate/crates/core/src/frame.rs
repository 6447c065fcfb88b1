//! Picture storage, raw I420 file I/O and PSNR.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// PSNR reported for identical planes, keeping RD curves finite.
pub const PSNR_IDENTICAL: f64 = 100.0;

/// One 8-bit sample plane in row-major order.
#[derive(Clone, PartialEq, Eq)]
pub struct PlaneBuffer {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for PlaneBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PlaneBuffer")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl PlaneBuffer {
    pub fn new(width: usize, height: usize, fill: u8) -> Self {
        PlaneBuffer {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "plane data has {} samples, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(PlaneBuffer { width, height, data })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Sample read with coordinates clamped to the plane edges.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn same_size(&self, other: &PlaneBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Copies a `w`x`h` region starting at (`x`, `y`) into a new vector.
    pub fn read_block(&self, x: usize, y: usize, w: usize, h: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(w * h);
        for r in y..y + h {
            out.extend_from_slice(&self.data[r * self.width + x..r * self.width + x + w]);
        }
        out
    }

    pub fn write_block(&mut self, x: usize, y: usize, w: usize, h: usize, block: &[u8]) {
        debug_assert_eq!(block.len(), w * h);
        for (r, src) in block.chunks_exact(w).enumerate() {
            let off = (y + r) * self.width + x;
            self.data[off..off + w].copy_from_slice(src);
        }
    }

    /// Sum of squared differences over the whole plane.
    pub fn sse(&self, other: &PlaneBuffer) -> Result<u64> {
        if !self.same_size(other) {
            return Err(Error::invalid(format!(
                "plane size mismatch: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(sse_u8(&self.data, &other.data))
    }

    /// Sum of squared differences over a rectangular region.
    pub fn sse_region(&self, other: &PlaneBuffer, x: usize, y: usize, w: usize, h: usize) -> u64 {
        let mut acc = 0u64;
        for r in y..y + h {
            let a = &self.data[r * self.width + x..r * self.width + x + w];
            let b = &other.data[r * other.width + x..r * other.width + x + w];
            acc += sse_u8(a, b);
        }
        acc
    }
}

#[inline]
pub(crate) fn sse_u8(a: &[u8], b: &[u8]) -> u64 {
    a.iter()
        .zip(b)
        .map(|(&p, &q)| {
            let d = p as i32 - q as i32;
            (d * d) as u64
        })
        .sum()
}

/// An 8-bit 4:2:0 picture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameBuffer {
    pub y: PlaneBuffer,
    pub u: PlaneBuffer,
    pub v: PlaneBuffer,
    pub poc: u32,
}

impl FrameBuffer {
    pub fn new(width: usize, height: usize, poc: u32) -> Result<Self> {
        check_dims(width, height)?;
        Ok(FrameBuffer {
            y: PlaneBuffer::new(width, height, 128),
            u: PlaneBuffer::new(width / 2, height / 2, 128),
            v: PlaneBuffer::new(width / 2, height / 2, 128),
            poc,
        })
    }

    pub fn from_planes(y: PlaneBuffer, u: PlaneBuffer, v: PlaneBuffer, poc: u32) -> Result<Self> {
        check_dims(y.width, y.height)?;
        for c in [&u, &v] {
            if c.width != y.width / 2 || c.height != y.height / 2 {
                return Err(Error::invalid(format!(
                    "chroma plane {}x{} does not match 4:2:0 luma {}x{}",
                    c.width, c.height, y.width, y.height
                )));
            }
        }
        Ok(FrameBuffer { y, u, v, poc })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.y.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.y.height
    }

    pub fn plane(&self, c: usize) -> &PlaneBuffer {
        match c {
            0 => &self.y,
            1 => &self.u,
            _ => &self.v,
        }
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut PlaneBuffer {
        match c {
            0 => &mut self.y,
            1 => &mut self.u,
            _ => &mut self.v,
        }
    }

    /// Bytes in I420 order: Y, then U, then V.
    pub fn to_i420(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.y.data.len() * 3 / 2);
        out.extend_from_slice(&self.y.data);
        out.extend_from_slice(&self.u.data);
        out.extend_from_slice(&self.v.data);
        out
    }

    pub fn from_i420(bytes: &[u8], width: usize, height: usize, poc: u32) -> Result<Self> {
        check_dims(width, height)?;
        let luma = width * height;
        let chroma = luma / 4;
        if bytes.len() != luma + 2 * chroma {
            return Err(Error::MalformedInput(format!(
                "frame needs {} bytes, got {}",
                luma + 2 * chroma,
                bytes.len()
            )));
        }
        Ok(FrameBuffer {
            y: PlaneBuffer::from_vec(width, height, bytes[..luma].to_vec())?,
            u: PlaneBuffer::from_vec(width / 2, height / 2, bytes[luma..luma + chroma].to_vec())?,
            v: PlaneBuffer::from_vec(width / 2, height / 2, bytes[luma + chroma..].to_vec())?,
            poc,
        })
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || !width.is_multiple_of(2) || !height.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "frame dimensions must be even and non-zero, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Reads every frame of a headerless I420 file.
pub fn load_yuv420(path: impl AsRef<Path>, width: usize, height: usize) -> Result<Vec<FrameBuffer>> {
    check_dims(width, height)?;
    let bytes = fs::read(path)?;
    let frame_size = width * height * 3 / 2;
    if bytes.is_empty() || bytes.len() % frame_size != 0 {
        return Err(Error::MalformedInput(format!(
            "file size {} is not a positive multiple of the {}-byte frame size for {}x{}",
            bytes.len(),
            frame_size,
            width,
            height
        )));
    }
    bytes
        .chunks_exact(frame_size)
        .enumerate()
        .map(|(i, chunk)| FrameBuffer::from_i420(chunk, width, height, i as u32))
        .collect()
}

pub fn save_yuv420(frames: &[FrameBuffer], path: impl AsRef<Path>) -> Result<()> {
    if let Some(first) = frames.first() {
        if let Some(bad) = frames
            .iter()
            .find(|f| f.width() != first.width() || f.height() != first.height())
        {
            return Err(Error::invalid(format!(
                "mixed frame dimensions: {}x{} and {}x{}",
                first.width(),
                first.height(),
                bad.width(),
                bad.height()
            )));
        }
    }
    let mut file = fs::File::create(path)?;
    for f in frames {
        file.write_all(&f.to_i420())?;
    }
    file.flush()?;
    Ok(())
}

/// Peak signal-to-noise ratio for 8-bit samples, or [`PSNR_IDENTICAL`] when
/// the planes match exactly.
pub fn psnr(reference: &PlaneBuffer, test: &PlaneBuffer) -> Result<f64> {
    let sse = reference.sse(test)?;
    Ok(psnr_from_sse(sse, reference.data.len()))
}

pub fn psnr_from_sse(sse: u64, samples: usize) -> f64 {
    if sse == 0 {
        return PSNR_IDENTICAL;
    }
    let mse = sse as f64 / samples as f64;
    10.0 * (255.0f64 * 255.0 / mse).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn write_bytes(n: usize) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(&(0..n).map(|i| i as u8).collect::<Vec<_>>()).unwrap();
        f
    }

    #[test]
    fn load_counts_frames() {
        let f = write_bytes(6);
        let frames = load_yuv420(f.path(), 2, 2).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].y.data(), &[0, 1, 2, 3]);
        assert_eq!(frames[0].u.data(), &[4]);
        assert_eq!(frames[0].v.data(), &[5]);

        let f = write_bytes(12);
        let frames = load_yuv420(f.path(), 2, 2).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[1].poc, 1);
    }

    #[test]
    fn load_rejects_bad_sizes() {
        let f = write_bytes(7);
        assert!(matches!(load_yuv420(f.path(), 2, 2), Err(Error::MalformedInput(_))));
        let f = write_bytes(0);
        assert!(matches!(load_yuv420(f.path(), 2, 2), Err(Error::MalformedInput(_))));
        let f = write_bytes(6);
        assert!(matches!(load_yuv420(f.path(), 3, 2), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn save_then_load_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let bytes: Vec<u8> = (0..16 * 16 * 3 / 2).map(|_| rng.gen()).collect();
        let frame = FrameBuffer::from_i420(&bytes, 16, 16, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.yuv");
        save_yuv420(std::slice::from_ref(&frame), &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), bytes);
        let back = load_yuv420(&path, 16, 16).unwrap();
        assert_eq!(back, vec![frame]);
    }

    #[test]
    fn save_empty_and_mixed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.yuv");
        save_yuv420(&[], &path).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 0);

        let a = FrameBuffer::new(4, 4, 0).unwrap();
        let b = FrameBuffer::new(8, 4, 1).unwrap();
        assert!(matches!(
            save_yuv420(&[a, b], dir.path().join("mixed.yuv")),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn psnr_cases() {
        let a = PlaneBuffer::new(8, 8, 100);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_IDENTICAL);
        let b = PlaneBuffer::new(8, 8, 101);
        let p = psnr(&a, &b).unwrap();
        assert!((p - 10.0 * 65025f64.log10()).abs() < 1e-12);
        assert!((p - 48.13).abs() < 0.005);
        let c = PlaneBuffer::new(4, 8, 0);
        assert!(matches!(psnr(&a, &c), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn psnr_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (w, h) = (rng.gen_range(1..40), rng.gen_range(1..40));
            let a: Vec<u8> = (0..w * h).map(|_| rng.gen()).collect();
            let b: Vec<u8> = (0..w * h).map(|_| rng.gen()).collect();
            // independent oracle: plain double-precision MSE
            let mut mse = 0.0f64;
            for i in 0..w * h {
                let d = a[i] as f64 - b[i] as f64;
                mse += d * d;
            }
            mse /= (w * h) as f64;
            let oracle = 10.0 * (255.0 * 255.0 / mse).log10();
            let pa = PlaneBuffer::from_vec(w, h, a).unwrap();
            let pb = PlaneBuffer::from_vec(w, h, b).unwrap();
            let got = psnr(&pa, &pb).unwrap();
            assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
            assert_eq!(got, psnr(&pb, &pa).unwrap());
        }
    }

    #[test]
    fn psnr_decreases_with_mse() {
        let mut last = f64::INFINITY;
        for sse in 1..200u64 {
            let p = psnr_from_sse(sse * 37, 1024);
            assert!(p < last);
            last = p;
        }
    }
}
