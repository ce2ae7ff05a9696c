//! The VFT1 per-frame feature format.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "VFT1"
//! 4       4     format version (u32 LE, = 1)
//! 8       4     feature_dim (u32 LE)
//! 12      4     num_frames (u32 LE)
//! 16      4     fps (f32 LE)
//! 20      4     video_id length in bytes (u32 LE)
//! 24      n     video_id, UTF-8
//! 24+n    …     num_frames × feature_dim f32 LE, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"VFT1";
pub const VERSION: u32 = 1;
const FIXED_HEADER: usize = 24;

/// Per-frame features of one video at its native frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    pub fps: f32,
    pub frames: Tensor<f32>,
}

impl FeatureSequence {
    pub fn new(video_id: impl Into<String>, fps: f32, frames: Tensor<f32>) -> Result<Self> {
        let s = FeatureSequence {
            video_id: video_id.into(),
            fps,
            frames,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.shape().len() != 2 {
            return Err(Error::usage(format!(
                "features of '{}' must be a matrix, got shape {:?}",
                self.video_id,
                self.frames.shape()
            )));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::usage(format!(
                "fps of '{}' must be positive, got {}",
                self.video_id, self.fps
            )));
        }
        if !self.frames.all_finite() {
            return Err(Error::usage(format!(
                "features of '{}' contain non-finite values",
                self.video_id
            )));
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let id = self.video_id.as_bytes();
        let to_u32 = |v: usize, what: &str| {
            u32::try_from(v).map_err(|_| Error::usage(format!("{what} {v} does not fit in u32")))
        };
        let mut out = Vec::with_capacity(FIXED_HEADER + id.len() + 4 * self.frames.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&to_u32(self.feature_dim(), "feature_dim")?.to_le_bytes());
        out.extend_from_slice(&to_u32(self.num_frames(), "num_frames")?.to_le_bytes());
        out.extend_from_slice(&self.fps.to_le_bytes());
        out.extend_from_slice(&to_u32(id.len(), "video_id length")?.to_le_bytes());
        out.extend_from_slice(id);
        for v in self.frames.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    /// Parses a VFT1 byte buffer; `path` only labels diagnostics.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let err = |offset: usize, reason: String| Error::format(path, offset as u64, reason);
        let u32_at = |off: usize| -> Result<u32> {
            bytes
                .get(off..off + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| {
                    err(
                        bytes.len(),
                        format!("truncated header, needed bytes {off}..{}", off + 4),
                    )
                })
        };
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(err(0, "bad magic, expected \"VFT1\"".into()));
        }
        let version = u32_at(4)?;
        if version != VERSION {
            return Err(err(4, format!("unsupported format version {version}")));
        }
        let dim = u32_at(8)? as usize;
        let frames = u32_at(12)? as usize;
        let fps = f32::from_bits(u32_at(16)?);
        let id_len = u32_at(20)? as usize;
        if dim == 0 {
            return Err(err(8, "feature_dim is zero".into()));
        }
        if frames == 0 {
            return Err(err(12, "num_frames is zero".into()));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(err(16, format!("fps must be positive, got {fps}")));
        }
        let id_end = FIXED_HEADER + id_len;
        let id_bytes = bytes
            .get(FIXED_HEADER..id_end)
            .ok_or_else(|| err(bytes.len(), format!("truncated video_id, declared {id_len} bytes")))?;
        let video_id = std::str::from_utf8(id_bytes)
            .map_err(|e| err(FIXED_HEADER + e.valid_up_to(), "video_id is not valid UTF-8".into()))?
            .to_owned();

        let expected = dim
            .checked_mul(frames)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| err(8, "declared payload size overflows".into()))?;
        let payload = &bytes[id_end..];
        if payload.len() != expected {
            return Err(err(
                id_end + payload.len().min(expected),
                format!(
                    "payload is {} bytes, header declares {frames} frames × {dim} dims = {expected}",
                    payload.len()
                ),
            ));
        }
        let mut data = Vec::with_capacity(dim * frames);
        for (k, c) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(c.try_into().unwrap());
            if !v.is_finite() {
                return Err(err(
                    id_end + 4 * k,
                    format!("non-finite value at frame {}, dim {}", k / dim, k % dim),
                ));
            }
            data.push(v);
        }
        Ok(FeatureSequence {
            video_id,
            fps,
            frames: Tensor::new(vec![frames, dim], data)?,
        })
    }
}

pub fn write_features(seq: &FeatureSequence, path: &Path) -> Result<()> {
    fs::write(path, seq.encode()?).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureSequence::decode(&bytes, path)
}

/// Reads only the fixed header and id: `(video_id, feature_dim, num_frames, fps)`.
pub fn peek_header(path: &Path) -> Result<(String, usize, usize, f32)> {
    use std::io::Read;
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = [0u8; FIXED_HEADER];
    f.read_exact(&mut head)
        .map_err(|_| Error::format(path, 0, "file shorter than VFT1 header"))?;
    if &head[..4] != MAGIC {
        return Err(Error::format(path, 0, "bad magic, expected \"VFT1\""));
    }
    let word = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().unwrap());
    let mut id = vec![0u8; word(20) as usize];
    f.read_exact(&mut id)
        .map_err(|_| Error::format(path, FIXED_HEADER as u64, "truncated video_id"))?;
    let id = String::from_utf8(id).map_err(|_| Error::format(path, FIXED_HEADER as u64, "video_id is not UTF-8"))?;
    Ok((id, word(8) as usize, word(12) as usize, f32::from_bits(word(16))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(id: &str, frames: usize, dim: usize) -> FeatureSequence {
        let data = (0..frames * dim).map(|i| i as f32 * 0.25 - 3.0).collect();
        FeatureSequence::new(id, 30.0, Tensor::new(vec![frames, dim], data).unwrap()).unwrap()
    }

    #[test]
    fn byte_layout_size() {
        assert_eq!(seq("v", 1, 4).encode().unwrap().len(), 41);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.vft");
        let s = seq("video_12", 7, 3);
        write_features(&s, &path).unwrap();
        assert_eq!(read_features(&path).unwrap(), s);
        assert_eq!(peek_header(&path).unwrap(), ("video_12".into(), 3, 7, 30.0));
    }

    #[test]
    fn corrupt_magic() {
        let mut b = seq("v", 2, 2).encode().unwrap();
        b[0] = b'W';
        let e = FeatureSequence::decode(&b, Path::new("x")).unwrap_err();
        assert!(matches!(e, Error::Format { offset: 0, .. }), "{e}");
    }

    #[test]
    fn bad_version() {
        let mut b = seq("v", 2, 2).encode().unwrap();
        b[4] = 9;
        assert!(matches!(
            FeatureSequence::decode(&b, Path::new("x")),
            Err(Error::Format { offset: 4, .. })
        ));
    }

    #[test]
    fn truncated_and_overlong_payload() {
        let b = seq("v", 2, 2).encode().unwrap();
        for bad in [&b[..b.len() - 1], &b[..10]] {
            assert!(matches!(
                FeatureSequence::decode(bad, Path::new("x")),
                Err(Error::Format { .. })
            ));
        }
        let mut long = b.clone();
        long.push(0);
        assert!(matches!(
            FeatureSequence::decode(&long, Path::new("x")),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn non_finite_value_offset() {
        let mut b = seq("v", 2, 2).encode().unwrap();
        let off = 25 + 4 * 3;
        b[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        match FeatureSequence::decode(&b, Path::new("x")) {
            Err(Error::Format { offset, reason, .. }) => {
                assert_eq!(offset as usize, off);
                assert!(reason.contains("frame 1, dim 1"));
            }
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn encode_decode_identity(
            id in "[a-zA-Z0-9_éü-]{0,12}",
            frames in 1usize..6,
            dim in 1usize..6,
            fps in 1.0f32..120.0,
            seed in any::<u32>(),
        ) {
            let data: Vec<f32> = (0..frames * dim)
                .map(|i| f32::from_bits((seed.wrapping_add((i as u32).wrapping_mul(2654435761))) & 0x3fff_ffff))
                .collect();
            let s = FeatureSequence::new(id, fps, Tensor::new(vec![frames, dim], data).unwrap()).unwrap();
            let back = FeatureSequence::decode(&s.encode().unwrap(), Path::new("p")).unwrap();
            prop_assert_eq!(back.encode().unwrap(), s.encode().unwrap());
            prop_assert_eq!(back, s);
        }
    }
}
