//! MMRS container: `"MMRS"`, `u16` version, `u16` modality count, then
//! `(h, w, b)` as `u32` per modality, then each modality's `f32` planes
//! (band-sequential, row-major within a band), then one `i32` label plane.
//! All integers and floats are little-endian. Every modality shares `h × w`.

use std::path::Path;

use super::raster::{LabelRaster, ModalRaster};
use crate::error::{Error, Result};
use crate::io;

pub const MAGIC: &[u8; 4] = b"MMRS";
pub const VERSION: u16 = 1;

/// Co-registered modalities with their shared label plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub modalities: Vec<ModalRaster>,
    pub labels: LabelRaster,
}

impl Scene {
    pub fn new(modalities: Vec<ModalRaster>, labels: LabelRaster) -> Result<Self> {
        if modalities.is_empty() {
            return Err(Error::Data("a scene needs at least one modality".into()));
        }
        for (i, m) in modalities.iter().enumerate() {
            if (m.height, m.width) != (labels.height, labels.width) {
                return Err(Error::Data(format!(
                    "modality {} is {}x{} but the label plane is {}x{}",
                    i + 1,
                    m.height,
                    m.width,
                    labels.height,
                    labels.width
                )));
            }
        }
        Ok(Self { modalities, labels })
    }

    pub fn height(&self) -> usize {
        self.labels.height
    }

    pub fn width(&self) -> usize {
        self.labels.width
    }
}

pub fn encode(scene: &Scene) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(scene.modalities.len() as u16).to_le_bytes());
    for m in &scene.modalities {
        for v in [m.height, m.width, m.bands] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
    }
    for m in &scene.modalities {
        for b in 0..m.bands {
            for v in m.data.iter().skip(b).step_by(m.bands) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    for v in &scene.labels.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.bytes.len() as u64,
                detail: format!(
                    "truncated {what}: needs bytes {}..{}, file has {}",
                    self.pos,
                    self.pos + n,
                    self.bytes.len()
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Scene> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            detail: format!("bad magic {:?}", String::from_utf8_lossy(magic)),
        });
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            detail: format!("version {version} is not supported (expected {VERSION})"),
        });
    }
    let count = r.u16("modality count")? as usize;
    if count == 0 {
        return Err(Error::Format { offset: 6, detail: "modality count is zero".into() });
    }
    let mut dims = Vec::with_capacity(count);
    for i in 0..count {
        let at = r.pos as u64;
        let what = format!("header of modality {}", i + 1);
        let (h, w, b) = (r.u32(&what)? as usize, r.u32(&what)? as usize, r.u32(&what)? as usize);
        if h == 0 || w == 0 || b == 0 {
            return Err(Error::Format { offset: at, detail: format!("{what} has a zero extent") });
        }
        if let Some(&(h0, w0, _)) = dims.first() {
            if (h, w) != (h0, w0) {
                return Err(Error::Format {
                    offset: at,
                    detail: format!("{what} is {h}x{w}, modality 1 is {h0}x{w0}"),
                });
            }
        }
        dims.push((h, w, b));
    }
    let mut modalities = Vec::with_capacity(count);
    for (i, &(h, w, b)) in dims.iter().enumerate() {
        let plane = r.take(h * w * b * 4, &format!("data of modality {}", i + 1))?;
        let mut data = vec![0f32; h * w * b];
        for (j, chunk) in plane.chunks_exact(4).enumerate() {
            let (band, px) = (j / (h * w), j % (h * w));
            data[px * b + band] = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        modalities.push(ModalRaster::new(h, w, b, data)?);
    }
    let (h, w, _) = dims[0];
    let plane = r.take(h * w * 4, "label plane")?;
    let labels = plane
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if r.pos != bytes.len() {
        return Err(Error::Format {
            offset: r.pos as u64,
            detail: format!("{} trailing bytes after the label plane", bytes.len() - r.pos),
        });
    }
    Scene::new(modalities, LabelRaster::new(h, w, labels)?)
}

pub fn save(path: &Path, scene: &Scene) -> Result<()> {
    io::write_atomic(path, &encode(scene))
}

pub fn load(path: &Path) -> Result<Scene> {
    decode(&io::read(path)?)
}
