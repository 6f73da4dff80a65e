//! Binary on-disk format for policy tables.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic "OEDP" | version u32 | name_len u32 | name bytes
//! dim u32 | per dim: lo f64, hi f64, n u32
//! dt_h f64
//! n_controls u32 | control values f64...
//! n_prior u32 | prior thetas f64... | prior weights f64...
//! n_steps u32
//! control indices u8 x (n_steps * cells)
//! checksum u64   (FNV-1a 64 over every preceding byte)
//! ```
//!
//! The table for a long run is a few megabytes (one byte per cell per
//! step) and loads without parsing work; `oed describe` prints the header.

use anyhow::{anyhow, bail, Context, Result};
use oed_core::dp::{ControlSet, PolicyTable, PriorGrid};
use oed_core::mca::{AxisSpec, Grid};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"OEDP";
pub const VERSION: u32 = 1;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(policy: &PolicyTable) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    let name = policy.model_name.as_bytes();
    w.u32(name.len() as u32);
    w.buf.extend_from_slice(name);
    w.u32(policy.grid.dim() as u32);
    for axis in policy.grid.axes() {
        w.f64(axis.lo);
        w.f64(axis.hi);
        w.u32(axis.n as u32);
    }
    w.f64(policy.dt_h);
    w.u32(policy.controls.len() as u32);
    for &u in policy.controls.values() {
        w.f64(u);
    }
    w.u32(policy.prior.len() as u32);
    for &t in policy.prior.thetas() {
        w.f64(t);
    }
    for &p in policy.prior.weights() {
        w.f64(p);
    }
    w.u32(policy.n_steps as u32);
    w.buf.extend_from_slice(&policy.data);
    let sum = fnv1a64(&w.buf);
    w.u64(sum);
    w.buf
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            bail!("policy file truncated at byte {}", self.pos);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(buf: &[u8]) -> Result<PolicyTable> {
    if buf.len() < 16 {
        bail!("policy file too short");
    }
    let (payload, sum_bytes) = buf.split_at(buf.len() - 8);
    let stored = u64::from_le_bytes(sum_bytes.try_into().unwrap());
    let computed = fnv1a64(payload);
    if stored != computed {
        bail!("policy file checksum mismatch (stored {stored:#x}, computed {computed:#x})");
    }
    let mut c = Cursor { buf: payload, pos: 0 };
    if c.take(4)? != MAGIC {
        bail!("not a policy file (bad magic)");
    }
    let version = c.u32()?;
    if version != VERSION {
        bail!("unsupported policy file version {version}");
    }
    let name_len = c.u32()? as usize;
    let model_name = String::from_utf8(c.take(name_len)?.to_vec())
        .map_err(|_| anyhow!("policy file model name is not UTF-8"))?;
    let dim = c.u32()? as usize;
    let mut axes = Vec::with_capacity(dim);
    for _ in 0..dim {
        let lo = c.f64()?;
        let hi = c.f64()?;
        let n = c.u32()? as usize;
        axes.push(AxisSpec { lo, hi, n });
    }
    let grid = Grid::new(axes).map_err(|e| anyhow!("policy file grid: {e}"))?;
    let dt_h = c.f64()?;
    let n_controls = c.u32()? as usize;
    let mut controls = Vec::with_capacity(n_controls);
    for _ in 0..n_controls {
        controls.push(c.f64()?);
    }
    let controls = ControlSet::new(controls).map_err(|e| anyhow!("policy file controls: {e}"))?;
    let n_prior = c.u32()? as usize;
    let mut thetas = Vec::with_capacity(n_prior);
    for _ in 0..n_prior {
        thetas.push(c.f64()?);
    }
    let mut weights = Vec::with_capacity(n_prior);
    for _ in 0..n_prior {
        weights.push(c.f64()?);
    }
    let prior =
        PriorGrid::from_weighted(thetas, weights).map_err(|e| anyhow!("policy file prior: {e}"))?;
    let n_steps = c.u32()? as usize;
    let cells = grid.n_cells();
    let data = c.take(n_steps * cells)?.to_vec();
    if c.pos != payload.len() {
        bail!("policy file has {} trailing bytes", payload.len() - c.pos);
    }
    if data.iter().any(|&i| i as usize >= controls.len()) {
        bail!("policy file contains an out-of-range control index");
    }
    Ok(PolicyTable {
        model_name,
        grid,
        dt_h,
        controls,
        prior,
        n_steps,
        data,
    })
}

pub fn write(path: &Path, policy: &PolicyTable) -> Result<()> {
    std::fs::write(path, encode(policy))
        .with_context(|| format!("writing policy file {}", path.display()))
}

pub fn read(path: &Path) -> Result<PolicyTable> {
    let buf =
        std::fs::read(path).with_context(|| format!("reading policy file {}", path.display()))?;
    decode(&buf).with_context(|| format!("decoding policy file {}", path.display()))
}

/// Human-readable header summary.
pub fn describe(policy: &PolicyTable) -> String {
    let mut out = String::new();
    out.push_str(&format!("model:    {}\n", policy.model_name));
    out.push_str(&format!("dim:      {}\n", policy.grid.dim()));
    for (d, axis) in policy.grid.axes().iter().enumerate() {
        out.push_str(&format!(
            "axis {d}:   [{}, {}] with {} nodes (h = {:.6})\n",
            axis.lo,
            axis.hi,
            axis.n,
            policy.grid.spacing(d)
        ));
    }
    out.push_str(&format!("dt_h:     {}\n", policy.dt_h));
    out.push_str(&format!(
        "horizon:  {} ({} steps)\n",
        policy.horizon(),
        policy.n_steps
    ));
    out.push_str(&format!("controls: {:?}\n", policy.controls.values()));
    out.push_str(&format!(
        "prior:    {} values on [{}, {}]\n",
        policy.prior.len(),
        policy.prior.lo(),
        policy.prior.hi()
    ));
    out.push_str(&format!(
        "table:    {} bytes ({} cells x {} steps)\n",
        policy.data.len(),
        policy.grid.n_cells(),
        policy.n_steps
    ));
    let (_, t_stat) = policy.stationary_policy(0);
    out.push_str(&format!("stationary up to t = {t_stat}\n"));
    out
}

/// The header grid, controls and prior must match the requesting config
/// exactly before a policy may drive its experiment.
pub fn check_matches(policy: &PolicyTable, cfg: &crate::config::RunConfig) -> Result<()> {
    if policy.model_name != cfg.model.model().name() {
        bail!(
            "policy was solved for model `{}` but the config uses `{}`",
            policy.model_name,
            cfg.model.model().name()
        );
    }
    if policy.grid != cfg.grid {
        bail!("policy grid does not match the config grid");
    }
    if policy.controls != cfg.controls {
        bail!("policy control set does not match the config");
    }
    if policy.prior != cfg.prior {
        bail!("policy prior grid does not match the config");
    }
    Ok(())
}
