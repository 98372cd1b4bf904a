//! Real-valued functions on a uniform box grid, balls on the grid, the
//! first-order difference stencil, and CSV / binary file formats.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::domain::DomainSpec;
use crate::error::{Error, Result};

/// Values at every node of a [`DomainSpec`] grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    domain: DomainSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(domain: DomainSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.node_count() {
            return Err(Error::Invalid(format!("expected {} values, got {}", domain.node_count(), values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NodeRange { node: i, what: "grid value" });
        }
        Ok(Self { domain, values })
    }

    pub fn zeros(domain: DomainSpec) -> Self {
        let values = vec![0.0; domain.node_count()];
        Self { domain, values }
    }

    pub fn constant(domain: DomainSpec, c: f64) -> Self {
        let values = vec![c; domain.node_count()];
        Self { domain, values }
    }

    /// Samples `f` at every node.
    pub fn from_fn<F: FnMut(&[f64]) -> f64>(domain: DomainSpec, mut f: F) -> Result<Self> {
        let mut p = vec![0.0; domain.dim()];
        let values = (0..domain.node_count())
            .map(|i| {
                domain.point_into(i, &mut p);
                f(&p)
            })
            .collect();
        Self::new(domain, values)
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self { domain: self.domain.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// Pointwise `self + c * other`.
    pub fn axpy(&self, c: f64, other: &GridFunction) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self {
            domain: self.domain.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect(),
        })
    }

    pub fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.domain != other.domain {
            return Err(Error::Invalid("grid functions live on different grids".into()));
        }
        Ok(())
    }

    /// Largest absolute difference to `other`.
    pub fn max_abs_diff(&self, other: &GridFunction) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Writes `x1,..,xn,u` rows, preceded by an optional provenance comment.
    pub fn write_csv(&self, path: &Path, digest: Option<&str>) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        self.write_csv_to(&mut out, digest)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_csv_to<W: Write>(&self, out: &mut W, digest: Option<&str>) -> Result<()> {
        let n = self.domain.dim();
        if let Some(d) = digest {
            writeln!(out, "# config_sha256: {d}")?;
        }
        let header: Vec<String> = (1..=n).map(|i| format!("x{i}")).chain(["u".into()]).collect();
        writeln!(out, "{}", header.join(","))?;
        let mut p = vec![0.0; n];
        for (i, v) in self.values.iter().enumerate() {
            self.domain.point_into(i, &mut p);
            for c in &p {
                write!(out, "{c},")?;
            }
            writeln!(out, "{v}")?;
        }
        Ok(())
    }

    /// Reads the CSV layout of [`GridFunction::write_csv`]. The grid is
    /// reconstructed from the distinct coordinates per axis; rows must be in
    /// row-major node order.
    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::read_csv_from(BufReader::new(fs::File::open(path)?))
    }

    pub fn read_csv_from<R: BufRead>(reader: R) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut width = None;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if width.is_none() {
                if fields.last() != Some(&"u") {
                    return Err(Error::Format(format!("line {}: expected header x1,..,xn,u", lineno + 1)));
                }
                width = Some(fields.len());
                continue;
            }
            if Some(fields.len()) != width {
                return Err(Error::Format(format!("line {}: wrong column count", lineno + 1)));
            }
            let row = fields
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| Error::Format(format!("line {}: bad number {f:?}", lineno + 1))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        let width = width.ok_or_else(|| Error::Format("missing header".into()))?;
        let n = width - 1;
        if n < 2 || rows.is_empty() {
            return Err(Error::Format("need at least two coordinate columns and one row".into()));
        }
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        let mut res = Vec::with_capacity(n);
        for a in 0..n {
            let mut c: Vec<f64> = rows.iter().map(|r| r[a]).collect();
            c.sort_by(f64::total_cmp);
            c.dedup();
            lower.push(c[0]);
            upper.push(*c.last().unwrap());
            res.push(c.len());
        }
        let domain =
            DomainSpec::new(lower, upper, res).map_err(|e| Error::Format(format!("inconsistent grid: {e}")))?;
        if domain.node_count() != rows.len() {
            return Err(Error::Format(format!("{} rows do not fill a {:?} grid", rows.len(), domain.resolution())));
        }
        let mut p = vec![0.0; n];
        for (i, r) in rows.iter().enumerate() {
            domain.point_into(i, &mut p);
            for a in 0..n {
                let tol = 1e-9 * domain.spacing()[a];
                if (p[a] - r[a]).abs() > tol {
                    return Err(Error::Format(format!("row {i} is out of row-major order")));
                }
            }
        }
        let values = rows.into_iter().map(|r| r[n]).collect();
        Self::new(domain, values).map_err(|e| Error::Format(e.to_string()))
    }

    /// Binary layout: magic `MOGRID\0\x01`, `u32` dimension, `u32` flags
    /// (bit 0: digest present), per axis `u64` resolution and `f64` bounds,
    /// a 32-byte digest slot, then the values; all little-endian.
    pub fn write_binary(&self, path: &Path, digest: Option<[u8; 32]>) -> Result<()> {
        fs::write(path, self.to_binary(digest))?;
        Ok(())
    }

    pub fn to_binary(&self, digest: Option<[u8; 32]>) -> Vec<u8> {
        let n = self.domain.dim();
        let mut buf = Vec::with_capacity(16 + 24 * n + 32 + 8 * self.values.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(n as u32).to_le_bytes());
        buf.extend_from_slice(&(digest.is_some() as u32).to_le_bytes());
        for a in 0..n {
            buf.extend_from_slice(&(self.domain.resolution()[a] as u64).to_le_bytes());
            buf.extend_from_slice(&self.domain.lower()[a].to_le_bytes());
            buf.extend_from_slice(&self.domain.upper()[a].to_le_bytes());
        }
        buf.extend_from_slice(&digest.unwrap_or([0; 32]));
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }

    pub fn read_binary(path: &Path) -> Result<(Self, Option<[u8; 32]>)> {
        Self::from_binary(&fs::read(path)?)
    }

    pub fn from_binary(bytes: &[u8]) -> Result<(Self, Option<[u8; 32]>)> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let n = r.u32()? as usize;
        let flags = r.u32()?;
        if !(2..=64).contains(&n) {
            return Err(Error::Format(format!("unsupported dimension {n}")));
        }
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        let mut res = Vec::with_capacity(n);
        for _ in 0..n {
            res.push(r.u64()? as usize);
            lower.push(r.f64()?);
            upper.push(r.f64()?);
        }
        let mut digest = [0u8; 32];
        digest.copy_from_slice(r.take(32)?);
        let domain =
            DomainSpec::new(lower, upper, res).map_err(|e| Error::Format(format!("inconsistent header: {e}")))?;
        let count = domain.node_count();
        if bytes.len() - r.pos != 8 * count {
            return Err(Error::Format(format!(
                "payload holds {} bytes, header implies {}",
                bytes.len() - r.pos,
                8 * count
            )));
        }
        let values = (0..count).map(|_| r.f64()).collect::<Result<Vec<f64>>>()?;
        let g = Self::new(domain, values).map_err(|e| Error::Format(e.to_string()))?;
        Ok((g, (flags & 1 == 1).then_some(digest)))
    }

    /// Reads either format, choosing binary when the magic matches.
    pub fn read_any(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.starts_with(MAGIC) {
            Ok(Self::from_binary(&bytes)?.0)
        } else {
            Self::read_csv_from(BufReader::new(bytes.as_slice()))
        }
    }
}

const MAGIC: &[u8; 8] = b"MOGRID\0\x01";

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.pos + k > self.bytes.len() {
            return Err(Error::Format("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + k];
        self.pos += k;
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

/// Vector values at every node, stored node-major (`n` components per node).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    domain: DomainSpec,
    data: Vec<f64>,
}

impl VectorField {
    pub(crate) fn from_raw(domain: DomainSpec, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), domain.node_count() * domain.dim());
        Self { domain, data }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    /// The vector at node `idx`.
    pub fn at(&self, idx: usize) -> &[f64] {
        let n = self.domain.dim();
        &self.data[idx * n..(idx + 1) * n]
    }

    /// Euclidean length at node `idx`.
    pub fn norm_at(&self, idx: usize) -> f64 {
        self.at(idx).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// One component as a scalar grid function.
    pub fn component(&self, axis: usize) -> GridFunction {
        let n = self.domain.dim();
        GridFunction { domain: self.domain.clone(), values: self.data.iter().skip(axis).step_by(n).cloned().collect() }
    }

    pub fn magnitude(&self) -> GridFunction {
        GridFunction {
            domain: self.domain.clone(),
            values: (0..self.domain.node_count()).map(|i| self.norm_at(i)).collect(),
        }
    }
}

/// First-order difference stencil along `axis` at node `idx`: the derivative
/// is `coef * (u[plus] - u[minus])`, central in the interior and one-sided on
/// the two faces.
#[inline]
pub fn stencil(domain: &DomainSpec, idx: usize, axis: usize) -> (usize, usize, f64) {
    let i = domain.axis_index(idx, axis);
    let s = domain.strides()[axis];
    let h = domain.spacing()[axis];
    let last = domain.resolution()[axis] - 1;
    if i == 0 {
        (idx, idx + s, 1.0 / h)
    } else if i == last {
        (idx - s, idx, 1.0 / h)
    } else {
        (idx - s, idx + s, 0.5 / h)
    }
}

/// Open ball `{ y : |y - c| < r }`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    center: Vec<f64>,
    radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Region(format!("invalid ball: center {center:?}, radius {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Same center, radius scaled by `f`.
    pub fn scaled(&self, f: f64) -> Self {
        Self { center: self.center.clone(), radius: self.radius * f }
    }

    /// Grid nodes strictly inside the ball, in increasing index order.
    pub fn nodes(&self, domain: &DomainSpec) -> Result<Vec<usize>> {
        let n = domain.dim();
        if self.center.len() != n {
            return Err(Error::Region(format!("ball center has dimension {}, domain has {n}", self.center.len())));
        }
        // index range per axis covering the bounding box
        let mut lo = vec![0usize; n];
        let mut hi = vec![0usize; n];
        for a in 0..n {
            let h = domain.spacing()[a];
            let last = domain.resolution()[a] as f64 - 1.0;
            let l = ((self.center[a] - self.radius - domain.lower()[a]) / h).floor().clamp(0.0, last);
            let u = ((self.center[a] + self.radius - domain.lower()[a]) / h).ceil().clamp(0.0, last);
            lo[a] = l as usize;
            hi[a] = u as usize;
        }
        let r2 = self.radius * self.radius;
        let mut out = Vec::new();
        let mut cur = lo.clone();
        'outer: loop {
            let mut d2 = 0.0;
            let mut idx = 0;
            for a in 0..n {
                let x = domain.lower()[a] + cur[a] as f64 * domain.spacing()[a];
                d2 += (x - self.center[a]).powi(2);
                idx += cur[a] * domain.strides()[a];
            }
            if d2 < r2 {
                out.push(idx);
            }
            let mut a = n;
            loop {
                if a == 0 {
                    break 'outer;
                }
                a -= 1;
                if cur[a] < hi[a] {
                    cur[a] += 1;
                    break;
                }
                cur[a] = lo[a];
            }
        }
        Ok(out)
    }

    /// Like [`Ball::nodes`] but rejects balls that miss every node.
    pub fn nonempty_nodes(&self, domain: &DomainSpec) -> Result<Vec<usize>> {
        let nodes = self.nodes(domain)?;
        if nodes.is_empty() {
            return Err(Error::Region(format!(
                "ball at {:?} with radius {} contains no grid node",
                self.center, self.radius
            )));
        }
        Ok(nodes)
    }
}
