//! File formats: Netpbm graymaps, CSV frames, JSON run manifests and
//! solution dumps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::characteristics::VelocityTimeline;
use crate::error::{Error, Result};
use crate::field::{Grid2D, ScalarField, SpaceTimeField, TimeGrid, VelocityField};
use crate::pipeline::{IterationReport, Method, SolverConfig, TransportSolution};

/// A decoded PGM raster, rows top to bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    comments: Vec<String>,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    let start = self.pos + 1;
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' && self.bytes[self.pos] != b'\r' {
                        self.pos += 1;
                    }
                    self.comments.push(String::from_utf8_lossy(&self.bytes[start..self.pos]).trim().to_string());
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Pgm(format!("expected {what} at byte {start}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::Pgm(format!("{what} out of range")))
    }
}

impl PgmImage {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 2 || bytes[0] != b'P' || !(bytes[1] == b'2' || bytes[1] == b'5') {
            return Err(Error::Pgm("missing P2/P5 magic number".into()));
        }
        let plain = bytes[1] == b'2';
        let mut h = Header {
            bytes,
            pos: 2,
            comments: Vec::new(),
        };
        let width = h.number("width")? as usize;
        let height = h.number("height")? as usize;
        let maxval = h.number("maxval")?;
        if width == 0 || height == 0 {
            return Err(Error::Pgm(format!("zero-size image {width}x{height}")));
        }
        if maxval == 0 || maxval > 65535 {
            return Err(Error::Pgm(format!("maxval {maxval} outside 1..=65535")));
        }
        let maxval = maxval as u16;
        let count = width * height;
        let pixels = if plain {
            let mut px = Vec::with_capacity(count);
            for _ in 0..count {
                let v = h.number("pixel")?;
                if v > maxval as u32 {
                    return Err(Error::Pgm(format!("pixel {v} exceeds maxval {maxval}")));
                }
                px.push(v as u16);
            }
            px
        } else {
            // exactly one whitespace byte separates maxval from the raster
            if h.pos >= bytes.len() || !bytes[h.pos].is_ascii_whitespace() {
                return Err(Error::Pgm("missing whitespace after maxval".into()));
            }
            let raster = &bytes[h.pos + 1..];
            let depth = if maxval < 256 { 1 } else { 2 };
            if raster.len() < count * depth {
                return Err(Error::Pgm(format!(
                    "raster truncated: need {} bytes, have {}",
                    count * depth,
                    raster.len()
                )));
            }
            let px: Vec<u16> = if depth == 1 {
                raster[..count].iter().map(|&b| b as u16).collect()
            } else {
                raster[..2 * count]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]))
                    .collect()
            };
            if let Some(v) = px.iter().find(|&&v| v > maxval) {
                return Err(Error::Pgm(format!("pixel {v} exceeds maxval {maxval}")));
            }
            px
        };
        Ok(PgmImage {
            width,
            height,
            maxval,
            pixels,
        })
    }

    /// Comment lines of the header, without the leading `#`.
    pub fn header_comments(bytes: &[u8]) -> Result<Vec<String>> {
        if bytes.len() < 2 || bytes[0] != b'P' || !(bytes[1] == b'2' || bytes[1] == b'5') {
            return Err(Error::Pgm("missing P2/P5 magic number".into()));
        }
        let mut h = Header {
            bytes,
            pos: 2,
            comments: Vec::new(),
        };
        h.number("width")?;
        h.number("height")?;
        h.number("maxval")?;
        Ok(h.comments)
    }

    /// Binary (P5) encoding.
    pub fn to_p5(&self) -> Vec<u8> {
        self.to_p5_with_comments(&[])
    }

    /// Binary encoding with one `# ...` header line per comment.
    pub fn to_p5_with_comments(&self, comments: &[String]) -> Vec<u8> {
        let mut out = String::from("P5\n");
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = write!(out, "{} {}\n{}\n", self.width, self.height, self.maxval);
        let mut out = out.into_bytes();
        if self.maxval < 256 {
            out.extend(self.pixels.iter().map(|&p| p as u8));
        } else {
            for p in &self.pixels {
                out.extend_from_slice(&p.to_be_bytes());
            }
        }
        out
    }

    /// Plain (P2) encoding.
    pub fn to_p2(&self) -> Vec<u8> {
        let mut out = format!("P2\n{} {}\n{}\n", self.width, self.height, self.maxval);
        for row in self.pixels.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out.into_bytes()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&bytes).map_err(|e| match e {
            Error::Pgm(m) => Error::Pgm(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Map to a field on `[-1, 1]^2` with one node per pixel (top row at
    /// `y = 1`), pixel `p` becoming `lower + (upper - lower) p / maxval`.
    pub fn to_field(&self, lower: f64, upper: f64) -> Result<ScalarField> {
        if !(lower < upper) {
            return Err(Error::InvalidParameter(format!("intensity range [{lower}, {upper}] is empty")));
        }
        if self.width < 2 || self.height < 2 {
            return Err(Error::Pgm(format!(
                "image {}x{} too small: need at least 2x2 pixels",
                self.width, self.height
            )));
        }
        let grid = Grid2D::new(self.width - 1, self.height - 1, [-1.0, 1.0], [-1.0, 1.0])?;
        let scale = (upper - lower) / self.maxval as f64;
        let values = (0..grid.num_nodes())
            .map(|k| {
                let (i, j) = grid.ij(k);
                let row = self.height - 1 - j;
                lower + scale * self.pixels[row * self.width + i] as f64
            })
            .collect();
        ScalarField::new(grid, values)
    }

    /// Inverse of [`PgmImage::to_field`], rounding and clamping to `0..=maxval`.
    pub fn from_field(field: &ScalarField, lower: f64, upper: f64, maxval: u16) -> Result<Self> {
        if !(lower < upper) {
            return Err(Error::InvalidParameter(format!("intensity range [{lower}, {upper}] is empty")));
        }
        if maxval == 0 {
            return Err(Error::InvalidParameter("maxval must be positive".into()));
        }
        let g = field.grid();
        let (width, height) = (g.nodes_x(), g.nodes_y());
        let mut pixels = vec![0u16; width * height];
        let scale = maxval as f64 / (upper - lower);
        for j in 0..height {
            for i in 0..width {
                let p = ((field.at(i, j) - lower) * scale).round().clamp(0.0, maxval as f64);
                pixels[(height - 1 - j) * width + i] = p as u16;
            }
        }
        Ok(PgmImage {
            width,
            height,
            maxval,
            pixels,
        })
    }
}

/// Read a P2/P5 graymap as a field with intensities mapped to `[lower, upper]`.
pub fn load_pgm(path: impl AsRef<Path>, lower: f64, upper: f64) -> Result<ScalarField> {
    PgmImage::read(path)?.to_field(lower, upper)
}

/// Write `field` as a binary graymap, mapping `[lower, upper]` to
/// `0..=maxval`.
pub fn save_pgm(field: &ScalarField, path: impl AsRef<Path>, lower: f64, upper: f64, maxval: u16) -> Result<()> {
    let path = path.as_ref();
    let img = PgmImage::from_field(field, lower, upper, maxval)?;
    fs::write(path, img.to_p5()).map_err(|e| Error::io(path, e))
}

/// `x,y,value` rows (after a header line), 17 significant digits.
pub fn field_to_csv(field: &ScalarField) -> String {
    let g = field.grid();
    let mut out = String::with_capacity(g.num_nodes() * 72);
    out.push_str("x,y,value\n");
    for (k, v) in field.values().iter().enumerate() {
        let [x, y] = g.node(k);
        writeln!(out, "{x:.16e},{y:.16e},{v:.16e}").unwrap();
    }
    out
}

pub fn field_from_csv(text: &str, grid: &Grid2D) -> Result<ScalarField> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "x,y,value" => {}
        _ => return Err(Error::Csv("missing x,y,value header".into())),
    }
    let mut values = Vec::with_capacity(grid.num_nodes());
    for (n, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Csv(format!("line {}: expected 3 columns", n + 2)));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Csv(format!("line {}: bad number {s:?}", n + 2)))
        };
        let (x, y, v) = (parse(cols[0])?, parse(cols[1])?, parse(cols[2])?);
        if n >= grid.num_nodes() {
            return Err(Error::Csv("more rows than grid nodes".into()));
        }
        let [gx, gy] = grid.node(n);
        let tol = 1e-9 * (grid.hx().min(grid.hy()));
        if (gx - x).abs() > tol || (gy - y).abs() > tol {
            return Err(Error::Csv(format!("line {}: node ({x}, {y}) out of order", n + 2)));
        }
        values.push(v);
    }
    ScalarField::new(*grid, values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrameFormat {
    /// Binary graymaps with `[lower, upper]` mapped to `0..=maxval`.
    Pgm { lower: f64, upper: f64, maxval: u16 },
    Csv,
}

/// File stem of knot `k` among `nt + 1` frames, e.g. `frame_007`.
pub fn frame_name(k: usize, nt: usize) -> String {
    let width = nt.to_string().len().max(3);
    format!("frame_{k:0width$}")
}

/// Write one file per knot into `dir` (created if needed).
pub fn save_frames(rho: &SpaceTimeField, dir: impl AsRef<Path>, format: FrameFormat) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let nt = rho.tgrid().nt();
    let mut written = Vec::with_capacity(nt + 1);
    for k in 0..=nt {
        let slice = rho.slice_field(k);
        let path = match format {
            FrameFormat::Pgm { lower, upper, maxval } => {
                let p = dir.join(format!("{}.pgm", frame_name(k, nt)));
                save_pgm(&slice, &p, lower, upper, maxval)?;
                p
            }
            FrameFormat::Csv => {
                let p = dir.join(format!("{}.csv", frame_name(k, nt)));
                fs::write(&p, field_to_csv(&slice)).map_err(|e| Error::io(&p, e))?;
                p
            }
        };
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub solve_seconds: f64,
    pub total_seconds: f64,
}

/// Machine-readable record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub method: Method,
    pub config: SolverConfig,
    /// Intensity range the input images were mapped to.
    pub intensity_range: [f64; 2],
    pub grid: Grid2D,
    pub inputs: Vec<InputRecord>,
    pub converged: bool,
    pub iterations: usize,
    pub outer_residuals: Vec<f64>,
    pub kinetic_energies: Vec<f64>,
    pub mass_drift: f64,
    pub pcg_iterations: Vec<usize>,
    pub warnings: Vec<String>,
    pub timings: Timings,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: &SolverConfig,
        intensity_range: [f64; 2],
        inputs: Vec<InputRecord>,
        sol: &TransportSolution,
        timings: Timings,
    ) -> Self {
        let r: &IterationReport = &sol.report;
        RunManifest {
            command: command.to_string(),
            method: sol.method,
            config: config.clone(),
            intensity_range,
            grid: *sol.rho.grid(),
            inputs,
            converged: r.converged,
            iterations: r.iterations,
            outer_residuals: r.outer_residuals.clone(),
            kinetic_energies: r.kinetic_energies.clone(),
            mass_drift: r.mass_drift,
            pcg_iterations: r.pcg_iterations.clone(),
            warnings: r.warnings.clone(),
            timings,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Full-precision dump of a [`TransportSolution`], read back by `diagnose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub method: Method,
    pub grid: Grid2D,
    pub tgrid: TimeGrid,
    pub rho: Vec<f64>,
    pub potential: Vec<f64>,
    pub velocity_x: Vec<f64>,
    pub velocity_y: Vec<f64>,
    pub report: IterationReport,
}

impl SolutionFile {
    pub fn from_solution(sol: &TransportSolution) -> Self {
        let cat = |f: &dyn Fn(usize) -> Vec<f64>| (0..=sol.rho.tgrid().nt()).flat_map(f).collect::<Vec<f64>>();
        SolutionFile {
            method: sol.method,
            grid: *sol.rho.grid(),
            tgrid: sol.rho.tgrid().clone(),
            rho: sol.rho.values().to_vec(),
            potential: cat(&|k| sol.potential[k].values().to_vec()),
            velocity_x: cat(&|k| sol.velocity.slice(k).vx().to_vec()),
            velocity_y: cat(&|k| sol.velocity.slice(k).vy().to_vec()),
            report: sol.report.clone(),
        }
    }

    pub fn into_solution(self) -> Result<TransportSolution> {
        let nn = self.grid.num_nodes();
        let knots = self.tgrid.nt() + 1;
        for (name, v) in [
            ("potential", &self.potential),
            ("velocity_x", &self.velocity_x),
            ("velocity_y", &self.velocity_y),
        ] {
            if v.len() != nn * knots {
                return Err(Error::GridMismatch(format!(
                    "{name} has {} values, expected {}",
                    v.len(),
                    nn * knots
                )));
            }
        }
        let rho = SpaceTimeField::new(self.tgrid.clone(), self.grid, self.rho)?;
        let potential = self
            .potential
            .chunks(nn)
            .map(|c| ScalarField::new(self.grid, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let slices = self
            .velocity_x
            .chunks(nn)
            .zip(self.velocity_y.chunks(nn))
            .map(|(x, y)| VelocityField::new(self.grid, x.to_vec(), y.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(TransportSolution {
            rho,
            velocity: VelocityTimeline::new(self.tgrid, slices)?,
            potential,
            method: self.method,
            report: self.report,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let s = serde_json::to_string(self)?;
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_comments_round_trip() {
        let img = PgmImage { width: 2, height: 1, maxval: 300, pixels: vec![0, 300] };
        let bytes = img.to_p5_with_comments(&["first".into(), "range 1 2".into()]);
        assert_eq!(PgmImage::parse(&bytes).unwrap(), img);
        assert_eq!(PgmImage::header_comments(&bytes).unwrap(), vec!["first", "range 1 2"]);
        assert!(PgmImage::header_comments(&img.to_p5()).unwrap().is_empty());
    }

    #[test]
    fn parses_plain_with_comments() {
        let src = b"P2\n# created by hand\n2 2 # trailing\n255\n0 85\n170 255\n";
        let img = PgmImage::parse(src).unwrap();
        assert_eq!((img.width, img.height, img.maxval), (2, 2, 255));
        assert_eq!(img.pixels, vec![0, 85, 170, 255]);
        let f = img.to_field(0.0, 1.0).unwrap();
        // top row of the image is y = 1
        let expect = [170.0, 255.0, 0.0, 85.0].map(|p: f64| p / 255.0);
        for (a, b) in f.values().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_image_maps_to_floor() {
        let img = PgmImage::parse(b"P2 3 2 255 0 0 0 0 0 0").unwrap();
        let f = img.to_field(0.05, 1.05).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.05));
    }

    #[test]
    fn binary_sixteen_bit() {
        let img = PgmImage {
            width: 3,
            height: 2,
            maxval: 65535,
            pixels: vec![0, 1, 256, 65535, 4000, 7],
        };
        assert_eq!(PgmImage::parse(&img.to_p5()).unwrap(), img);
        assert_eq!(PgmImage::parse(&img.to_p2()).unwrap(), img);
    }

    #[test]
    fn malformed_headers() {
        assert!(PgmImage::parse(b"P6\n1 1\n255\n\0").is_err());
        assert!(PgmImage::parse(b"P5\n0 4\n255\n").is_err());
        assert!(PgmImage::parse(b"P5\n2 2\n255\n\0\0").is_err());
        assert!(PgmImage::parse(b"P2\n2 2\n10\n1 2 3 11").is_err());
        assert!(PgmImage::parse(b"P2\nx 2\n10\n").is_err());
        let tiny = PgmImage::parse(b"P2 1 3 9 1 2 3").unwrap();
        assert!(tiny.to_field(0.0, 1.0).is_err());
    }

    #[test]
    fn frame_names_are_zero_padded() {
        assert_eq!(frame_name(0, 60), "frame_000");
        assert_eq!(frame_name(60, 60), "frame_060");
        assert_eq!(frame_name(12, 1500), "frame_0012");
    }

    #[test]
    fn csv_rejects_shuffled_rows() {
        let g = Grid2D::unit_square(1).unwrap();
        let f = ScalarField::from_fn(g, |x, y| x + 10.0 * y);
        let text = field_to_csv(&f);
        assert_eq!(field_from_csv(&text, &g).unwrap(), f);
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(1, 2);
        assert!(field_from_csv(&lines.join("\n"), &g).is_err());
    }
}
