//! Reproducible Brownian increment sequences.
//!
//! Each path is keyed by `(seed, path_index)`. The key is hashed with SHA-256
//! into a 256-bit ChaCha20 seed, so path `i` never depends on how many other
//! paths were drawn before it or on which worker draws it. Normal variates
//! come from `rand_distr::StandardNormal` (ziggurat method) and are scaled by
//! `sqrt(dt)`.

use std::io::{self, Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const KEY_DOMAIN: &[u8] = b"caplab/brownian/v1";

/// Magic bytes opening a binary increment dump.
pub const DUMP_MAGIC: &[u8; 6] = b"BPATH1";
/// Size of the binary dump header in bytes.
pub const DUMP_HEADER_LEN: usize = 32;

/// A sequence of standard Brownian increments on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    dt: f64,
    increments: Vec<f64>,
    seed: u64,
    path_index: u64,
}

fn stream_for(seed: u64, path_index: u64) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(KEY_DOMAIN);
    hasher.update(seed.to_le_bytes());
    hasher.update(path_index.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(key)
}

impl BrownianPath {
    /// Draws `n_steps` i.i.d. `N(0, dt)` increments from the stream keyed by
    /// `(seed, path_index)`.
    pub fn generate(seed: u64, path_index: u64, dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("step size must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::Config("a Brownian path needs at least one step".into()));
        }
        let mut rng = stream_for(seed, path_index);
        let scale = dt.sqrt();
        let increments = (0..n_steps)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect();
        Ok(BrownianPath {
            dt,
            increments,
            seed,
            path_index,
        })
    }

    /// Builds a path from explicit increments. Used for hand-made paths in
    /// tests and for decoded dumps.
    pub fn from_increments(dt: f64, increments: Vec<f64>, seed: u64, path_index: u64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("step size must be positive, got {dt}")));
        }
        if increments.is_empty() {
            return Err(Error::Config("a Brownian path needs at least one step".into()));
        }
        Ok(BrownianPath {
            dt,
            increments,
            seed,
            path_index,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    pub fn horizon(&self) -> f64 {
        self.increments.len() as f64 * self.dt
    }

    /// Values `B(t_0) = 0, B(t_1), ..., B(t_n)` by left-to-right summation.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.increments.len() + 1);
        let mut acc = 0.0;
        out.push(acc);
        for dw in &self.increments {
            acc += dw;
            out.push(acc);
        }
        out
    }

    /// Merges every `factor` consecutive increments into one, summing left to
    /// right. `factor = 1` returns an identical copy.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.increments.len().is_multiple_of(factor) {
            return Err(Error::Config(format!(
                "coarsening factor {factor} does not divide {} increments",
                self.increments.len()
            )));
        }
        let increments = self
            .increments
            .chunks_exact(factor)
            .map(|chunk| chunk.iter().fold(0.0, |acc, x| acc + x))
            .collect();
        Ok(BrownianPath {
            dt: self.dt * factor as f64,
            increments,
            seed: self.seed,
            path_index: self.path_index,
        })
    }

    /// Writes the 32-byte header followed by the increments as little-endian
    /// `f64`.
    ///
    /// Header layout: magic `BPATH1`, two zero bytes, `dt: f64`, `seed: u64`,
    /// `n_steps: u32`, `path_index: u32`, all little-endian.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n_steps = u32::try_from(self.increments.len())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "too many steps for dump"))?;
        let path_index = u32::try_from(self.path_index)
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "path index exceeds u32"))?;
        let mut header = [0u8; DUMP_HEADER_LEN];
        header[..6].copy_from_slice(DUMP_MAGIC);
        header[8..16].copy_from_slice(&self.dt.to_le_bytes());
        header[16..24].copy_from_slice(&self.seed.to_le_bytes());
        header[24..28].copy_from_slice(&n_steps.to_le_bytes());
        header[28..32].copy_from_slice(&path_index.to_le_bytes());
        w.write_all(&header)?;
        for x in &self.increments {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut r: R) -> io::Result<Self> {
        let invalid = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
        let mut header = [0u8; DUMP_HEADER_LEN];
        r.read_exact(&mut header)?;
        if &header[..6] != DUMP_MAGIC {
            return Err(invalid("bad magic"));
        }
        let dt = f64::from_le_bytes(header[8..16].try_into().unwrap());
        let seed = u64::from_le_bytes(header[16..24].try_into().unwrap());
        let n_steps = u32::from_le_bytes(header[24..28].try_into().unwrap()) as usize;
        let path_index = u32::from_le_bytes(header[28..32].try_into().unwrap()) as u64;
        let mut increments = Vec::with_capacity(n_steps);
        let mut buf = [0u8; 8];
        for _ in 0..n_steps {
            r.read_exact(&mut buf)?;
            increments.push(f64::from_le_bytes(buf));
        }
        BrownianPath::from_increments(dt, increments, seed, path_index)
            .map_err(|e| invalid(&e.to_string()))
    }
}
