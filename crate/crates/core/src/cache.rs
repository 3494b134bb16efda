//! On-disk cache of Fourier blocks.
//!
//! File layout, all integers and floats little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `OAMPDCX1` |
//! | 32 | SHA-256 of the setup and grid request, see [`setup_hash`] |
//! | 8 × 4 | n_radial, n_phi (u64), q_max_rel (f64), n_half_width (i64) as requested |
//! | 8 × 3 | n_min (i64), block count (u64), node count N (u64) |
//! | 8 × 4 | c_norm, raw_norm, leakage, normalization_residual (f64) |
//! | 8 × 3 | q_max, q_eps (f64), angular sample count (u64) |
//! | 8 × 2N | radial nodes, then radial weights |
//! | 16 × N² per block | χ_n row-major (q_s rows, q_i columns), each entry re then im |
//!
//! The file name is the hex hash with extension `.chi`.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64 as C64;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{AngularGrid, GridSpec, RadialGrid};
use crate::kernels::{compute_chi_blocks_auto, ChiBlockSet};
use crate::setup::OpticalSetup;

const MAGIC: &[u8; 8] = b"OAMPDCX1";

/// Environment variable naming the cache directory.
pub const CACHE_DIR_ENV: &str = "OAMPDC_CACHE_DIR";

/// SHA-256 over the setup, the grid request and the library version.
///
/// Floats enter through their shortest round-trip representation, so equal
/// configurations hash equally across runs and platforms.
pub fn setup_hash(setup: &OpticalSetup, spec: &GridSpec) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(format!("{setup:?}|{spec:?}|{}", env!("CARGO_PKG_VERSION")).as_bytes());
    h.finalize().into()
}

pub fn hex(hash: &[u8; 32]) -> String {
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_chi<W: Write>(mut w: W, chi: &ChiBlockSet, spec: &GridSpec) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&setup_hash(&chi.setup, spec))?;
    w.write_all(&(spec.n_radial as u64).to_le_bytes())?;
    w.write_all(&(spec.n_phi as u64).to_le_bytes())?;
    w.write_all(&spec.q_max_rel.to_le_bytes())?;
    w.write_all(&spec.n_half_width.to_le_bytes())?;
    let n = chi.radial.len();
    w.write_all(&chi.n_min.to_le_bytes())?;
    w.write_all(&(chi.blocks.len() as u64).to_le_bytes())?;
    w.write_all(&(n as u64).to_le_bytes())?;
    for v in [chi.c_norm, chi.raw_norm, chi.leakage, chi.normalization_residual, chi.radial.q_max, chi.radial.q_eps] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(chi.angular.n_phi as u64).to_le_bytes())?;
    for v in chi.radial.nodes.iter().chain(&chi.radial.weights) {
        w.write_all(&v.to_le_bytes())?;
    }
    for b in &chi.blocks {
        for z in b.iter() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| Error::Cache(format!("truncated cache file: {e}")))?;
        Ok(b)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

/// Reads a cache file written for `setup` and `spec`.
///
/// A file written for another configuration is rejected.
pub fn read_chi<R: Read>(r: R, setup: &OpticalSetup, spec: &GridSpec) -> Result<ChiBlockSet> {
    let mut r = Reader { inner: r };
    if &r.bytes::<8>()? != MAGIC {
        return Err(Error::Cache("not a block cache file".into()));
    }
    if r.bytes::<32>()? != setup_hash(setup, spec) {
        return Err(Error::Cache("cache file belongs to a different configuration".into()));
    }
    let stored = GridSpec {
        n_radial: r.u64()? as usize,
        n_phi: r.u64()? as usize,
        q_max_rel: r.f64()?,
        n_half_width: r.i64()?,
    };
    if stored != *spec {
        return Err(Error::Cache("grid request in the header does not match".into()));
    }
    let n_min = r.i64()?;
    let nb = r.u64()? as usize;
    let n = r.u64()? as usize;
    if n != spec.n_radial || nb == 0 || nb > 1 << 20 {
        return Err(Error::Cache(format!("implausible header: {nb} blocks of {n} nodes")));
    }
    let c_norm = r.f64()?;
    let raw_norm = r.f64()?;
    let leakage = r.f64()?;
    let normalization_residual = r.f64()?;
    let q_max = r.f64()?;
    let q_eps = r.f64()?;
    let angular = AngularGrid::new(r.u64()? as usize).map_err(|e| Error::Cache(e.to_string()))?;
    let nodes = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let weights = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let mut blocks = Vec::with_capacity(nb);
    for _ in 0..nb {
        let data = (0..n * n)
            .map(|_| Ok(C64::new(r.f64()?, r.f64()?)))
            .collect::<Result<Vec<_>>>()?;
        blocks.push(Array2::from_shape_vec((n, n), data).expect("shape matches length"));
    }
    if r.inner.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Cache("trailing bytes after the last block".into()));
    }
    Ok(ChiBlockSet {
        setup: *setup,
        radial: RadialGrid { nodes, weights, q_max, q_eps },
        angular,
        n_min,
        blocks,
        c_norm,
        raw_norm,
        leakage,
        normalization_residual,
    })
}

/// Directory of cache files keyed by [`setup_hash`].
#[derive(Clone, Debug)]
pub struct ChiCache {
    dir: PathBuf,
}

impl ChiCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// The cache named by [`CACHE_DIR_ENV`], if set and non-empty.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()).map(Self::new)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, setup: &OpticalSetup, spec: &GridSpec) -> PathBuf {
        self.dir.join(format!("{}.chi", hex(&setup_hash(setup, spec))))
    }

    /// The cached blocks, or `None` when no file exists for this configuration.
    pub fn load(&self, setup: &OpticalSetup, spec: &GridSpec) -> Result<Option<ChiBlockSet>> {
        let path = self.path_for(setup, spec);
        match fs::File::open(&path) {
            Ok(f) => read_chi(BufReader::new(f), setup, spec).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Writes through a temporary file so that readers never see a partial entry.
    pub fn store(&self, chi: &ChiBlockSet, spec: &GridSpec) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path_for(&chi.setup, spec);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        write_chi(BufWriter::new(fs::File::create(&tmp)?), chi, spec)?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    /// Cached blocks when present, otherwise computed with
    /// [`compute_chi_blocks_auto`] and stored. The flag reports a cache hit.
    pub fn get_or_compute(&self, setup: &OpticalSetup, spec: &GridSpec) -> Result<(ChiBlockSet, bool)> {
        if let Some(chi) = self.load(setup, spec)? {
            return Ok((chi, true));
        }
        let chi = compute_chi_blocks_auto(setup, spec)?;
        self.store(&chi, spec)?;
        Ok((chi, false))
    }
}
