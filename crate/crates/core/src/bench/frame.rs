use crate::codec::{Document, JsonHints, Value};

/// Bytes per RGB pixel plus bytes per 16-bit depth pixel.
pub const BYTES_PER_PIXEL: usize = 3 + 2;

/// Camera-like payload: an RGB image and a 16-bit depth map.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticRgbdFrame {
    pub width: i32,
    pub height: i32,
    pub seq: i64,
    pub stamp_us: i64,
    pub frame_id: String,
    pub rgb: Vec<u8>,
    pub depth: Vec<u8>,
}

impl SyntheticRgbdFrame {
    /// Deterministic gradient image and depth ramp.
    pub fn new(width: i32, height: i32, seq: i64) -> Self {
        let (w, h) = (width.max(0) as usize, height.max(0) as usize);
        let mut rgb = Vec::with_capacity(w * h * 3);
        let mut depth = Vec::with_capacity(w * h * 2);
        for y in 0..h {
            for x in 0..w {
                rgb.extend_from_slice(&[x as u8, y as u8, (x ^ y) as u8]);
                let mm = (500 + (x + y) % 4000) as u16;
                depth.extend_from_slice(&mm.to_le_bytes());
            }
        }
        SyntheticRgbdFrame {
            width,
            height,
            seq,
            stamp_us: 0,
            frame_id: "camera_rgbd".into(),
            rgb,
            depth,
        }
    }

    /// Payload bytes: `width × height × 5`.
    pub fn frame_bytes(width: i32, height: i32) -> i64 {
        width as i64 * height as i64 * BYTES_PER_PIXEL as i64
    }

    pub fn to_document(&self) -> Document {
        let mut header = Document::with_capacity(3);
        header.insert("seq", self.seq);
        header.insert("stamp_us", self.stamp_us);
        header.insert("frame_id", self.frame_id.as_str());
        let mut d = Document::with_capacity(5);
        d.insert("header", header);
        d.insert("width", self.width);
        d.insert("height", self.height);
        d.insert("rgb", Value::Binary(self.rgb.clone()));
        d.insert("depth", Value::Binary(self.depth.clone()));
        d
    }

    /// Decodes and checks that both buffers match the dimensions.
    pub fn from_document(d: &Document) -> Option<Self> {
        let header = d.get_document("header")?;
        let width = d.get_i64("width").and_then(|v| i32::try_from(v).ok())?;
        let height = d.get_i64("height").and_then(|v| i32::try_from(v).ok())?;
        let pixels = width.max(0) as usize * height.max(0) as usize;
        let rgb = d.get_binary("rgb")?;
        let depth = d.get_binary("depth")?;
        if rgb.len() != pixels * 3 || depth.len() != pixels * 2 {
            return None;
        }
        Some(SyntheticRgbdFrame {
            width,
            height,
            seq: header.get_i64("seq")?,
            stamp_us: header.get_i64("stamp_us")?,
            frame_id: header.get_str("frame_id")?.to_owned(),
            rgb: rgb.to_vec(),
            depth: depth.to_vec(),
        })
    }

    /// Hints that let a JSON reader restore this frame inside a publish
    /// envelope.
    pub fn json_hints() -> JsonHints {
        JsonHints::new()
            .binary("msg/rgb")
            .binary("msg/depth")
            .int32("msg/width")
            .int32("msg/height")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vga_frame_is_1_536_000_bytes() {
        assert_eq!(SyntheticRgbdFrame::frame_bytes(640, 480), 1_536_000);
        let f = SyntheticRgbdFrame::new(640, 480, 0);
        assert_eq!(f.rgb.len() + f.depth.len(), 1_536_000);
    }

    #[test]
    fn document_round_trip() {
        let f = SyntheticRgbdFrame::new(8, 4, 3);
        assert_eq!(SyntheticRgbdFrame::from_document(&f.to_document()).unwrap(), f);
        let mut d = f.to_document();
        d.insert("width", 9i32);
        assert!(SyntheticRgbdFrame::from_document(&d).is_none());
    }
}
