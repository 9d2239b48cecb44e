//! Simulation field data: snapshots, dense tensors, datasets, and the
//! on-disk dataset format.
//!
//! A [`Snapshot`] is one frame of the four perturbation fields on an `h`x`w`
//! grid. The channel order is fixed globally by [`CHANNEL_NAMES`]:
//! density, x-velocity, y-velocity, pressure. Every other module consumes
//! these in-memory types; only this module touches the dataset file layout.
//!
//! # Dataset file layout (version 1)
//!
//! All integers and floats little-endian.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "PDSHDATA"
//! 8       4     u32 version (= 1)
//! 12      4     u32 frame count T
//! 16      4     u32 grid rows h
//! 20      4     u32 grid cols w
//! 24      8     f64 dt
//! 32      4     u32 meta flag (0 = absent, 1 = present)
//! 36      96    solver config block, only if meta flag = 1:
//!               u32 n, u32 t_steps, then f64 extent, gamma, rho_c, p_c,
//!               uc_x, uc_y, pulse_amp, pulse_hw, pulse_cx, pulse_cy, cfl
//! ...     T*4*h*w*8   frames, each 4 channels of h*w f64, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::euler::SolverConfig;

/// Number of field channels per snapshot.
pub const CHANNELS: usize = 4;

/// Fixed channel order shared by every module. Index into this array is the
/// channel index used everywhere (tensors, files, metrics).
pub const CHANNEL_NAMES: [&str; CHANNELS] = ["rho", "ux", "uy", "p"];

/// Channel indices, named.
pub const CH_RHO: usize = 0;
pub const CH_UX: usize = 1;
pub const CH_UY: usize = 2;
pub const CH_P: usize = 3;

const DATASET_MAGIC: [u8; 8] = *b"PDSHDATA";
const DATASET_VERSION: u32 = 1;

/// Dense `c`x`h`x`w` tensor of f64, row-major within each channel plane,
/// channels outermost. The flat index of `(c, i, j)` is `(c*h + i)*w + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor3 {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != c * h * w {
            return Err(Error::ShapeMismatch(format!(
                "tensor data length {} != {}x{}x{}",
                data.len(),
                c,
                h,
                w
            )));
        }
        Ok(Tensor3 { c, h, w, data })
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, c: usize, i: usize, j: usize) -> usize {
        (c * self.h + i) * self.w + j
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[self.idx(c, i, j)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, i: usize, j: usize, v: f64) {
        let k = self.idx(c, i, j);
        self.data[k] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// One channel plane as a flat `h*w` slice.
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.h * self.w..(c + 1) * self.h * self.w]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.h * self.w;
        &mut self.data[c * n..(c + 1) * n]
    }

    /// One row of one channel plane.
    #[inline]
    pub fn row(&self, c: usize, i: usize) -> &[f64] {
        let start = (c * self.h + i) * self.w;
        &self.data[start..start + self.w]
    }

    #[inline]
    pub fn row_mut(&mut self, c: usize, i: usize) -> &mut [f64] {
        let start = (c * self.h + i) * self.w;
        &mut self.data[start..start + self.w]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Policy for [`slice_region`] when the requested window leaves the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutOfBoundsPolicy {
    /// Cells outside the grid read as 0.0.
    ZeroFill,
    /// Any out-of-bounds cell is an error.
    Strict,
}

/// Cut a `rows`x`cols` window starting at (possibly negative) `(row0, col0)`
/// out of every channel of `t`. Under [`OutOfBoundsPolicy::ZeroFill`] the
/// window may extend past the grid and the overhang reads as zeros.
pub fn slice_region(
    t: &Tensor3,
    row0: i64,
    col0: i64,
    rows: usize,
    cols: usize,
    fill: OutOfBoundsPolicy,
) -> Result<Tensor3> {
    if rows == 0 || cols == 0 {
        return Err(Error::Config(
            "slice_region needs rows >= 1, cols >= 1".into(),
        ));
    }
    let (h, w) = (t.h as i64, t.w as i64);
    let in_bounds = row0 >= 0 && col0 >= 0 && row0 + rows as i64 <= h && col0 + cols as i64 <= w;
    if fill == OutOfBoundsPolicy::Strict && !in_bounds {
        return Err(Error::OutOfBounds {
            row0,
            col0,
            rows,
            cols,
            h: t.h,
            w: t.w,
        });
    }
    let mut out = Tensor3::zeros(t.c, rows, cols);
    // Overlap of the window with the grid, in window coordinates.
    let i_lo = (-row0).max(0).min(rows as i64) as usize;
    let i_hi = (h - row0).max(0).min(rows as i64) as usize;
    let j_lo = (-col0).max(0).min(cols as i64) as usize;
    let j_hi = (w - col0).max(0).min(cols as i64) as usize;
    for c in 0..t.c {
        for i in i_lo..i_hi {
            let src_row = t.row(c, (row0 + i as i64) as usize);
            let dst_row = out.row_mut(c, i);
            let src0 = (col0 + j_lo as i64) as usize;
            dst_row[j_lo..j_hi].copy_from_slice(&src_row[src0..src0 + (j_hi - j_lo)]);
        }
    }
    Ok(out)
}

/// One simulation frame: the four perturbation fields on an `h`x`w` grid.
/// Construction validates the shape and that every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    fields: Tensor3,
}

impl Snapshot {
    pub fn new(fields: Tensor3) -> Result<Self> {
        if fields.c() != CHANNELS {
            return Err(Error::ShapeMismatch(format!(
                "snapshot needs {} channels, got {}",
                CHANNELS,
                fields.c()
            )));
        }
        if let Some(pos) = fields.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "snapshot value at flat index {pos}"
            )));
        }
        Ok(Snapshot { fields })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Snapshot {
            fields: Tensor3::zeros(CHANNELS, h, w),
        }
    }

    pub fn h(&self) -> usize {
        self.fields.h()
    }

    pub fn w(&self) -> usize {
        self.fields.w()
    }

    pub fn fields(&self) -> &Tensor3 {
        &self.fields
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.fields.get(c, i, j)
    }
}

/// Copy a snapshot into the tensor currency used by the network kernels.
pub fn snapshot_to_tensor(s: &Snapshot) -> Tensor3 {
    s.fields.clone()
}

/// Inverse of [`snapshot_to_tensor`]; validates shape and finiteness.
pub fn tensor_to_snapshot(t: Tensor3) -> Result<Snapshot> {
    Snapshot::new(t)
}

/// An ordered sequence of frames with the time-step size and, when known,
/// the solver configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frames: Vec<Snapshot>,
    pub dt: f64,
    pub meta: Option<SolverConfig>,
}

impl Dataset {
    pub fn new(frames: Vec<Snapshot>, dt: f64, meta: Option<SolverConfig>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Config("dataset needs at least one frame".into()));
        }
        let (h, w) = (frames[0].h(), frames[0].w());
        if frames.iter().any(|f| f.h() != h || f.w() != w) {
            return Err(Error::ShapeMismatch(
                "dataset frames differ in grid size".into(),
            ));
        }
        Ok(Dataset { frames, dt, meta })
    }

    pub fn h(&self) -> usize {
        self.frames[0].h()
    }

    pub fn w(&self) -> usize {
        self.frames[0].w()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub(crate) fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn solver_config_to_bytes(cfg: &SolverConfig) -> Vec<u8> {
    let mut buf = Vec::with_capacity(96);
    put_u32(&mut buf, cfg.n as u32);
    put_u32(&mut buf, cfg.t_steps as u32);
    for v in [
        cfg.extent,
        cfg.gamma,
        cfg.rho_c,
        cfg.p_c,
        cfg.uc_x,
        cfg.uc_y,
        cfg.pulse_amp,
        cfg.pulse_hw,
        cfg.pulse_cx,
        cfg.pulse_cy,
        cfg.cfl,
    ] {
        put_f64(&mut buf, v);
    }
    buf
}

pub(crate) struct Cursor<'a, R: Read> {
    pub(crate) reader: &'a mut R,
    pub(crate) path: &'a Path,
}

impl<'a, R: Read> Cursor<'a, R> {
    pub(crate) fn exact(&mut self, buf: &mut [u8]) -> Result<()> {
        self.reader.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Truncated {
                    path: self.path.to_path_buf(),
                    expected: buf.len(),
                }
            } else {
                Error::io(self.path, e)
            }
        })
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
}

/// Write a dataset in the version-1 layout described in the module docs.
/// Round trips are bit-exact, including `dt` and the solver metadata.
pub fn write_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut header = Vec::with_capacity(132);
    header.extend_from_slice(&DATASET_MAGIC);
    put_u32(&mut header, DATASET_VERSION);
    put_u32(&mut header, d.frames.len() as u32);
    put_u32(&mut header, d.h() as u32);
    put_u32(&mut header, d.w() as u32);
    put_f64(&mut header, d.dt);
    match &d.meta {
        Some(cfg) => {
            put_u32(&mut header, 1);
            header.extend_from_slice(&solver_config_to_bytes(cfg));
        }
        None => put_u32(&mut header, 0),
    }
    out.write_all(&header).map_err(|e| Error::io(path, e))?;
    let mut row = Vec::with_capacity(d.w() * 8);
    for frame in &d.frames {
        let t = frame.fields();
        for c in 0..CHANNELS {
            for i in 0..t.h() {
                row.clear();
                for v in t.row(c, i) {
                    row.extend_from_slice(&v.to_le_bytes());
                }
                out.write_all(&row).map_err(|e| Error::io(path, e))?;
            }
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn solver_config_from_cursor<R: Read>(cur: &mut Cursor<R>) -> Result<SolverConfig> {
    let n = cur.u32()? as usize;
    let t_steps = cur.u32()? as usize;
    Ok(SolverConfig {
        n,
        t_steps,
        extent: cur.f64()?,
        gamma: cur.f64()?,
        rho_c: cur.f64()?,
        p_c: cur.f64()?,
        uc_x: cur.f64()?,
        uc_y: cur.f64()?,
        pulse_amp: cur.f64()?,
        pulse_hw: cur.f64()?,
        pulse_cx: cur.f64()?,
        pulse_cy: cur.f64()?,
        cfl: cur.f64()?,
    })
}

/// Read a dataset written by [`write_dataset`]. Wrong magic, wrong version,
/// and truncation each surface as their own error variant.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut cur = Cursor {
        reader: &mut reader,
        path,
    };
    let mut magic = [0u8; 8];
    cur.exact(&mut magic)?;
    if magic != DATASET_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: magic,
            expected: DATASET_MAGIC,
        });
    }
    let version = cur.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::BadVersion {
            path: path.to_path_buf(),
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let t = cur.u32()? as usize;
    let h = cur.u32()? as usize;
    let w = cur.u32()? as usize;
    let dt = cur.f64()?;
    let meta = match cur.u32()? {
        0 => None,
        _ => Some(solver_config_from_cursor(&mut cur)?),
    };
    let mut frames = Vec::with_capacity(t);
    let plane = h * w;
    let mut raw = vec![0u8; plane * 8];
    for _ in 0..t {
        let mut data = Vec::with_capacity(CHANNELS * plane);
        for _ in 0..CHANNELS {
            cur.exact(&mut raw)?;
            data.extend(
                raw.chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap())),
            );
        }
        frames.push(Snapshot::new(Tensor3::from_vec(CHANNELS, h, w, data)?)?);
    }
    Dataset::new(frames, dt, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ramp_tensor(c: usize, h: usize, w: usize) -> Tensor3 {
        let data = (0..c * h * w).map(|k| k as f64 * 0.25).collect();
        Tensor3::from_vec(c, h, w, data).unwrap()
    }

    #[test]
    fn snapshot_to_tensor_zero_case() {
        let s = Snapshot::zeros(2, 2);
        let t = snapshot_to_tensor(&s);
        assert_eq!(t.shape(), (4, 2, 2));
        assert!(t.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn snapshot_to_tensor_single_element_placement() {
        let mut fields = Tensor3::zeros(CHANNELS, 2, 2);
        fields.set(CH_RHO, 0, 0, 0.5);
        let s = Snapshot::new(fields).unwrap();
        let t = snapshot_to_tensor(&s);
        assert_eq!(t.data()[0], 0.5);
        assert!(t.data()[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tensor_snapshot_round_trip_is_identity() {
        let t = ramp_tensor(CHANNELS, 3, 5);
        let s = tensor_to_snapshot(t.clone()).unwrap();
        let back = snapshot_to_tensor(&s);
        assert_eq!(t, back);
    }

    #[test]
    fn snapshot_rejects_non_finite() {
        let mut fields = Tensor3::zeros(CHANNELS, 2, 2);
        fields.set(CH_P, 1, 1, f64::NAN);
        assert!(matches!(Snapshot::new(fields), Err(Error::NonFinite(_))));
    }

    #[test]
    fn snapshot_rejects_wrong_channel_count() {
        let fields = Tensor3::zeros(3, 2, 2);
        assert!(matches!(
            Snapshot::new(fields),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn dataset_file_size_arithmetic() {
        // 2 frames of 4x3x3 with no metadata: 36-byte header + 2*4*9*8 payload.
        let frames = vec![Snapshot::zeros(3, 3), Snapshot::zeros(3, 3)];
        let d = Dataset::new(frames, 0.125, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two.pdsh");
        write_dataset(&d, &path).unwrap();
        let len = std::fs::metadata(&path).unwrap().len();
        assert_eq!(len, 36 + 2 * 4 * 9 * 8);
    }

    #[test]
    fn read_rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.pdsh");
        std::fs::write(&path, b"NOTADATAxxxxxxxxxxxxxxxxxxxx").unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn read_rejects_wrong_version() {
        let d = Dataset::new(vec![Snapshot::zeros(2, 2)], 1.0, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.pdsh");
        write_dataset(&d, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 99;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_dataset(&path),
            Err(Error::BadVersion { found: 99, .. })
        ));
    }

    #[test]
    fn read_rejects_truncated_payload() {
        let d = Dataset::new(vec![Snapshot::zeros(4, 4)], 1.0, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pdsh");
        write_dataset(&d, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Truncated { .. })));
    }

    #[test]
    fn slice_top_left_sub_block() {
        let t = ramp_tensor(CHANNELS, 4, 4);
        let s = slice_region(&t, 0, 0, 2, 2, OutOfBoundsPolicy::Strict).unwrap();
        for c in 0..CHANNELS {
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(s.get(c, i, j), t.get(c, i, j));
                }
            }
        }
    }

    #[test]
    fn slice_zero_fill_overhang() {
        let t = ramp_tensor(CHANNELS, 4, 4);
        let s = slice_region(&t, -2, -2, 4, 4, OutOfBoundsPolicy::ZeroFill).unwrap();
        for c in 0..CHANNELS {
            for i in 0..4 {
                for j in 0..4 {
                    let expect = if i < 2 || j < 2 {
                        0.0
                    } else {
                        t.get(c, i - 2, j - 2)
                    };
                    assert_eq!(s.get(c, i, j), expect);
                }
            }
        }
    }

    #[test]
    fn slice_strict_rejects_overhang() {
        let t = ramp_tensor(1, 4, 4);
        assert!(matches!(
            slice_region(&t, 3, 3, 2, 2, OutOfBoundsPolicy::Strict),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn quadrant_decomposition_of_ten_by_ten() {
        // Four 5x5 quadrants of a 10x10 grid carry 25 points each and tile it.
        let t = ramp_tensor(1, 10, 10);
        let mut seen = [false; 100];
        for (r0, c0) in [(0, 0), (0, 5), (5, 0), (5, 5)] {
            let q = slice_region(&t, r0, c0, 5, 5, OutOfBoundsPolicy::Strict).unwrap();
            assert_eq!(q.len(), 25);
            for i in 0..5 {
                for j in 0..5 {
                    let (gi, gj) = (r0 as usize + i, c0 as usize + j);
                    assert_eq!(q.get(0, i, j), t.get(0, gi, gj));
                    seen[gi * 10 + gj] = true;
                }
            }
        }
        assert!(seen.iter().all(|&b| b));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn dataset_disk_round_trip_is_identity(
            frames in 1usize..4,
            h in 1usize..7,
            w in 1usize..7,
            seed in proptest::prelude::any::<u64>(),
            dt in 1e-6f64..10.0,
            with_meta in proptest::prelude::any::<bool>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut fs = Vec::with_capacity(frames);
            for _ in 0..frames {
                let mut t = Tensor3::zeros(CHANNELS, h, w);
                for v in t.data_mut() {
                    *v = rng.gen_range(-1e3..1e3);
                }
                fs.push(Snapshot::new(t).unwrap());
            }
            let meta = with_meta.then(SolverConfig::default);
            let d = Dataset::new(fs, dt, meta).unwrap();

            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("roundtrip.pdsh");
            write_dataset(&d, &path).unwrap();
            let back = read_dataset(&path).unwrap();

            prop_assert_eq!(back.dt.to_bits(), d.dt.to_bits());
            prop_assert_eq!(&back.meta, &d.meta);
            prop_assert_eq!(back.len(), d.len());
            for (a, b) in back.frames.iter().zip(&d.frames) {
                let same = a
                    .fields()
                    .iter()
                    .zip(b.fields().iter())
                    .all(|(x, y)| x.to_bits() == y.to_bits());
                prop_assert!(same, "frame payload changed across the disk trip");
            }
        }
    }
}
