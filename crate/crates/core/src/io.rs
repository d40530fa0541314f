//! Snapshot files, run configuration documents and provenance.
//!
//! Snapshot layout: the magic `OSGF`, a little-endian `u32` format version,
//! a `u32` header length, the JSON header, the CRC32 of the header bytes,
//! then the field data as little-endian `f64`, field-major, then time-major,
//! then space row-major (x fastest).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::budgets::TestFunction;
use crate::error::{Error, Result};
use crate::fields::{Field, FieldBlock, Grid, IBox, AXIS_T, AXIS_X};
use crate::filter::MollifierSpec;
use crate::solver::{Boundary, Init, NsConfig, Schedule};
use crate::thermo::{EosSpec, TransportModel};

pub const MAGIC: [u8; 4] = *b"OSGF";
pub const FORMAT_VERSION: u32 = 1;
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotHeader {
    pub d: usize,
    pub nx: Vec<usize>,
    pub dx: Vec<f64>,
    pub x0: Vec<f64>,
    pub periodic: Vec<bool>,
    pub nt_chunk: usize,
    pub dt: f64,
    pub t0: f64,
    pub c_ref: f64,
    pub eps: f64,
    pub eos: EosSpec,
    pub fields: Vec<String>,
}

fn field_names(d: usize) -> Vec<String> {
    let mut v = vec!["rho".to_string(), "u".to_string()];
    v.extend(["v_x", "v_y"].iter().take(d).map(|s| s.to_string()));
    v
}

impl SnapshotHeader {
    pub fn for_block(block: &FieldBlock, eos: &EosSpec) -> Self {
        let g = block.grid;
        let d = g.d;
        SnapshotHeader {
            d,
            nx: g.nx[..d].to_vec(),
            dx: g.dx[..d].to_vec(),
            x0: g.x0[..d].to_vec(),
            periodic: g.periodic[..d].to_vec(),
            nt_chunk: g.nt,
            dt: g.dt,
            t0: g.t0,
            c_ref: g.c_ref,
            eps: block.eps,
            eos: *eos,
            fields: field_names(d),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        let d = self.d;
        if !(d == 1 || d == 2) || [self.nx.len(), self.dx.len(), self.x0.len(), self.periodic.len()].iter().any(|&n| n != d) {
            return Err(Error::Format(format!("inconsistent spatial dimension {d}")));
        }
        if self.fields != field_names(d) {
            return Err(Error::Format(format!("unsupported field list {:?}", self.fields)));
        }
        let g = if d == 1 {
            Grid::new_1d(self.nx[0], self.dx[0], self.x0[0], self.periodic[0], self.nt_chunk, self.dt, self.t0, self.c_ref)
        } else {
            Grid::new_2d(
                [self.nx[0], self.nx[1]],
                [self.dx[0], self.dx[1]],
                [self.x0[0], self.x0[1]],
                [self.periodic[0], self.periodic[1]],
                self.nt_chunk,
                self.dt,
                self.t0,
                self.c_ref,
            )
        };
        g.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(g)
    }
}

/// Serializes a block. Entries outside a field's valid box are written as stored.
pub fn encode_snapshot(block: &FieldBlock, eos: &EosSpec) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&SnapshotHeader::for_block(block, eos)).map_err(|e| Error::Format(e.to_string()))?;
    let n = block.grid.len();
    let nf = 2 + block.v.len();
    let mut out = Vec::with_capacity(16 + header.len() + 8 * n * nf);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&crc32fast::hash(&header).to_le_bytes());
    for f in std::iter::once(&block.rho).chain(std::iter::once(&block.u)).chain(block.v.iter()) {
        for x in &f.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = at.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| Error::Format("truncated snapshot".into()))?;
    let s = &bytes[*at..end];
    *at = end;
    Ok(s)
}

fn read_u32(bytes: &[u8], at: &mut usize) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, at, 4)?.try_into().expect("4 bytes")))
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<(SnapshotHeader, FieldBlock)> {
    let mut at = 0;
    if take(bytes, &mut at, 4)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = read_u32(bytes, &mut at)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let hlen = read_u32(bytes, &mut at)? as usize;
    let hbytes = take(bytes, &mut at, hlen)?;
    let crc = read_u32(bytes, &mut at)?;
    if crc32fast::hash(hbytes) != crc {
        return Err(Error::Format("header checksum mismatch".into()));
    }
    let header: SnapshotHeader = serde_json::from_slice(hbytes).map_err(|e| Error::Format(format!("header: {e}")))?;
    let grid = header.grid()?;
    let n = grid.len();
    let nf = header.fields.len();
    if bytes.len() - at != 8 * n * nf {
        return Err(Error::Format(format!("expected {} data bytes, found {}", 8 * n * nf, bytes.len() - at)));
    }
    let mut fields = Vec::with_capacity(nf);
    for _ in 0..nf {
        let raw = take(bytes, &mut at, 8 * n)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        fields.push(Field::from_vec(grid, data)?);
    }
    let mut it = fields.into_iter();
    let rho = it.next().expect("rho");
    let u = it.next().expect("u");
    let block = FieldBlock { grid, rho, u, v: it.collect(), eps: header.eps };
    block.validate(header.eos.rho_floor)?;
    Ok((header, block))
}

pub fn write_snapshot(path: &Path, block: &FieldBlock, eos: &EosSpec) -> Result<()> {
    let bytes = encode_snapshot(block, eos)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, FieldBlock)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_snapshot(&bytes)
}

/// Spatial grid and integrator settings of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub dx: f64,
    /// Left edge of the domain.
    #[serde(default)]
    pub x0: f64,
    pub bc: Boundary,
    pub cfl: f64,
    #[serde(default)]
    pub c_ref: Option<f64>,
}

/// Bump test function in physical coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionSpec {
    pub name: String,
    pub x: f64,
    pub t: f64,
    pub half_x: f64,
    pub half_t: f64,
}

impl TestFunctionSpec {
    pub fn build(&self, grid: &Grid) -> Result<TestFunction> {
        TestFunction::bump(&self.name, grid, [self.x, 0.0, self.t], [self.half_x, 1.0, self.half_t])
    }
}

/// Analysis region `[x_lo, x_hi] × [t_lo, t_hi]`; a missing time range means every snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubdomainSpec {
    pub name: String,
    pub x: [f64; 2],
    #[serde(default)]
    pub t: Option<[f64; 2]>,
}

impl SubdomainSpec {
    pub fn index_box(&self, grid: &Grid) -> Result<IBox> {
        let span = |axis: usize, lo: f64, hi: f64, n: usize| -> (usize, usize) {
            let c0 = grid.coord(axis, 0);
            let h = grid.spacing(axis);
            let a = ((lo - c0) / h - 1e-9).ceil().max(0.0) as usize;
            let b = (((hi - c0) / h + 1e-9).floor() + 1.0).clamp(0.0, n as f64) as usize;
            (a, b)
        };
        let s = grid.shape();
        let (i0, i1) = span(AXIS_X, self.x[0], self.x[1], s[AXIS_X]);
        let (k0, k1) = match self.t {
            Some([a, b]) => span(AXIS_T, a, b, s[AXIS_T]),
            None => (0, s[AXIS_T]),
        };
        let bx = IBox::new([i0, 0, k0], [i1, s[1], k1]);
        if bx.is_empty() {
            return Err(Error::config(format!("analysis.subdomains.{}", self.name), "selects no grid points"));
        }
        Ok(bx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default)]
    pub ells: Vec<f64>,
    #[serde(default)]
    pub test_functions: Vec<TestFunctionSpec>,
    #[serde(default)]
    pub subdomains: Vec<SubdomainSpec>,
    #[serde(default = "default_p")]
    pub p_values: Vec<f64>,
    #[serde(default)]
    pub kernel: MollifierSpec,
    /// Scale range of exponent fits; defaults to the span of `ells`.
    #[serde(default)]
    pub fit_range: Option<[f64; 2]>,
    /// Viscosity values of `scan-eps`.
    #[serde(default)]
    pub eps_list: Vec<f64>,
}

fn default_p() -> Vec<f64> {
    vec![3.0]
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            ells: Vec::new(),
            test_functions: Vec::new(),
            subdomains: Vec::new(),
            p_values: default_p(),
            kernel: MollifierSpec::default(),
            fit_range: None,
            eps_list: Vec::new(),
        }
    }
}

/// Everything needed to reproduce a run and its analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub eos: EosSpec,
    pub transport: TransportModel,
    pub grid: GridConfig,
    pub schedule: Schedule,
    pub init: Init,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn positive(v: f64, field: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be finite and > 0, got {v}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config("schema_version", format!("expected {SCHEMA_VERSION}, got {}", self.schema_version)));
        }
        positive(self.grid.dx, "grid.dx")?;
        positive(self.grid.cfl, "grid.cfl")?;
        if !self.grid.x0.is_finite() {
            return Err(Error::config("grid.x0", "must be finite"));
        }
        if self.grid.nx < 8 {
            return Err(Error::config("grid.nx", "must be >= 8"));
        }
        if let Some(c) = self.grid.c_ref {
            positive(c, "grid.c_ref")?;
        }
        positive(self.schedule.t_end, "schedule.t_end")?;
        positive(self.schedule.snapshot_dt, "schedule.snapshot_dt")?;
        if !(self.schedule.t_first >= 0.0 && self.schedule.t_first <= self.schedule.t_end) {
            return Err(Error::config("schedule.t_first", "must lie in [0, t_end]"));
        }
        for (i, &l) in self.analysis.ells.iter().enumerate() {
            positive(l, &format!("analysis.ells[{i}]"))?;
        }
        for (i, &p) in self.analysis.p_values.iter().enumerate() {
            if !(p >= 1.0 && p.is_finite()) {
                return Err(Error::config(format!("analysis.p_values[{i}]"), "must be >= 1"));
            }
        }
        for (i, &e) in self.analysis.eps_list.iter().enumerate() {
            positive(e, &format!("analysis.eps_list[{i}]"))?;
        }
        for tf in &self.analysis.test_functions {
            positive(tf.half_x, &format!("analysis.test_functions.{}.half_x", tf.name))?;
            positive(tf.half_t, &format!("analysis.test_functions.{}.half_t", tf.name))?;
        }
        if let Some([a, b]) = self.analysis.fit_range {
            if !(a > 0.0 && b > a) {
                return Err(Error::config("analysis.fit_range", "need 0 < lo < hi"));
            }
        }
        self.ns_config().validate()
    }

    pub fn ns_config(&self) -> NsConfig {
        NsConfig {
            eos: self.eos,
            transport: self.transport,
            nx: self.grid.nx,
            dx: self.grid.dx,
            x0: self.grid.x0,
            bc: self.grid.bc,
            cfl: self.grid.cfl,
            init: self.init.clone(),
            c_ref: self.grid.c_ref,
        }
    }

    pub fn with_eps(&self, eps: f64) -> RunConfig {
        let mut c = self.clone();
        c.transport.eps = eps;
        c
    }
}

/// Identifies the inputs and code that produced an output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
}

impl Provenance {
    /// SHA-256 over the canonical JSON form of `config` and the seed.
    pub fn new<T: Serialize>(config: &T, seed: u64) -> Self {
        let json = serde_json::to_vec(config).expect("serializable config");
        let mut h = Sha256::new();
        h.update(&json);
        h.update(seed.to_le_bytes());
        let digest = h.finalize();
        Provenance { config_hash: digest.iter().take(8).map(|b| format!("{b:02x}")).collect(), version: env!("CARGO_PKG_VERSION").to_string(), seed }
    }
}

/// Minimal CSV writer; every row gets the provenance columns appended.
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        let mut header: Vec<String> = columns.iter().map(|s| s.to_string()).collect();
        header.extend(["config_hash".to_string(), "version".to_string()]);
        CsvTable { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len() + 2, self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self, prov: &Provenance) -> String {
        let esc = |s: &str| if s.contains([',', '"', '\n']) { format!("\"{}\"", s.replace('"', "\"\"")) } else { s.to_string() };
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|c| esc(c)).chain([prov.config_hash.clone(), prov.version.clone()]).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}
