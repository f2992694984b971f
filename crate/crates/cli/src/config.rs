//! Flat INI-style run configuration.
//!
//! Sections and keys are documented in `docs/config.md`; unknown keys are
//! rejected so typos fail loudly. All values are parsed eagerly into a
//! strongly typed [`RunConfig`].

use anyhow::{anyhow, bail, Context, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Ini> {
        let mut out = Ini::default();
        let mut current = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split(&[';', '#']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                let name = line
                    .strip_prefix('[')
                    .and_then(|l| l.strip_suffix(']'))
                    .ok_or_else(|| anyhow!("line {}: malformed section header", lineno + 1))?;
                current = name.trim().to_string();
                out.sections.entry(current.clone()).or_default();
            } else if let Some((k, v)) = line.split_once('=') {
                if current.is_empty() {
                    bail!("line {}: key before any [section]", lineno + 1);
                }
                out.sections
                    .get_mut(&current)
                    .unwrap()
                    .insert(k.trim().to_string(), v.trim().to_string());
            } else {
                bail!("line {}: expected `key = value`", lineno + 1);
            }
        }
        Ok(out)
    }

    fn section(&self, name: &str) -> Option<&BTreeMap<String, String>> {
        self.sections.get(name)
    }
}

/// Typed view of one section with consumption tracking for unknown-key
/// detection.
struct Sect<'a> {
    name: &'a str,
    map: BTreeMap<String, String>,
}

impl<'a> Sect<'a> {
    fn new(ini: &Ini, name: &'a str) -> Sect<'a> {
        Sect { name, map: ini.section(name).cloned().unwrap_or_default() }
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn take_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .with_context(|| format!("[{}] {key} = `{v}` is not a number", self.name)),
        }
    }

    fn take_usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<usize>()
                .with_context(|| format!("[{}] {key} = `{v}` is not an integer", self.name)),
        }
    }

    fn take_bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => match v.as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => bail!("[{}] {key} = `{v}` is not a boolean", self.name),
            },
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(k) = self.map.keys().next() {
            bail!("[{}] unknown key `{k}`", self.name);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum GeometrySpec {
    Preset(String),
    Table(PathBuf),
}

#[derive(Debug, Clone)]
pub enum DomainShape {
    Disk { center: [f64; 2], radius: f64 },
    Rectangle { x1: [f64; 2], x2: [f64; 2] },
    PolylinePath(PathBuf),
}

#[derive(Debug, Clone)]
pub enum CurvatureSpec {
    /// c0 + c1 s(x) + c2 tanh(z / z0)
    Family { c0: f64, c1: f64, spatial: String, c2: f64, z0: f64 },
    Table(PathBuf),
}

#[derive(Debug, Clone)]
pub enum BoundarySpec {
    /// a0 + a1 x1 + a2 x2
    Linear { a0: f64, a1: f64, a2: f64 },
    VertexTable(PathBuf),
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub newton_tol: f64,
    pub max_iter: usize,
    pub sigma_step: f64,
    pub sigma_min_step: f64,
    pub growth: f64,
    pub backoff: f64,
}

#[derive(Debug, Clone)]
pub struct ToleranceConfig {
    pub tol_mono: f64,
    pub tol_serrin: Option<f64>,
    pub tol_ricci: f64,
}

#[derive(Debug, Clone)]
pub struct BarrierConfig {
    pub certify: bool,
    pub bounds: bool,
    pub dichotomy: bool,
    pub mu_pad: f64,
    pub tol_grad_factor: f64,
}

#[derive(Debug, Clone)]
pub enum ReferenceSpec {
    None,
    Cap { radius: f64 },
    Helicoid { c: f64 },
    TiltedPlane { lambda: f64 },
    SelfFinest,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub geometry: GeometrySpec,
    pub domain: DomainShape,
    pub resolution: usize,
    pub boundary_segments: usize,
    pub curvature: CurvatureSpec,
    pub boundary: BoundarySpec,
    pub solver: SolverConfig,
    pub tolerances: ToleranceConfig,
    pub barriers: BarrierConfig,
    pub reference: ReferenceSpec,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config `{}`", path.display()))?;
        let ini = Ini::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        RunConfig::from_ini(&ini, &base)
    }

    fn from_ini(ini: &Ini, base: &Path) -> Result<RunConfig> {
        let mut g = Sect::new(ini, "geometry");
        let geometry = match (g.take("preset"), g.take("table")) {
            (Some(p), None) => GeometrySpec::Preset(p),
            (None, Some(t)) => GeometrySpec::Table(base.join(t)),
            (None, None) => GeometrySpec::Preset("euclidean".into()),
            (Some(_), Some(_)) => bail!("[geometry] give either `preset` or `table`, not both"),
        };
        g.finish()?;

        let mut d = Sect::new(ini, "domain");
        let shape = d.take("shape").unwrap_or_else(|| "disk".into());
        let domain = match shape.as_str() {
            "disk" => {
                let center = parse_pair(&d.take("center").unwrap_or_else(|| "0,0".into()))?;
                let radius = d.take_f64("radius", 1.0)?;
                DomainShape::Disk { center, radius }
            }
            "rectangle" => DomainShape::Rectangle {
                x1: [d.take_f64("x1_min", 0.0)?, d.take_f64("x1_max", 1.0)?],
                x2: [d.take_f64("x2_min", 0.0)?, d.take_f64("x2_max", 1.0)?],
            },
            "polyline" => {
                let p = d
                    .take("path")
                    .ok_or_else(|| anyhow!("[domain] shape = polyline needs `path`"))?;
                DomainShape::PolylinePath(base.join(p))
            }
            other => bail!("[domain] unknown shape `{other}`"),
        };
        let resolution = d.take_usize("resolution", 65)?;
        let boundary_segments = d.take_usize("boundary_segments", 2048)?;
        d.finish()?;

        let mut c = Sect::new(ini, "curvature");
        let curvature = match c.take("table") {
            Some(t) => CurvatureSpec::Table(base.join(t)),
            None => CurvatureSpec::Family {
                c0: c.take_f64("c0", 0.0)?,
                c1: c.take_f64("c1", 0.0)?,
                spatial: c.take("spatial").unwrap_or_else(|| "one".into()),
                c2: c.take_f64("c2", 0.0)?,
                z0: c.take_f64("z0", 1.0)?,
            },
        };
        c.finish()?;

        let mut b = Sect::new(ini, "boundary_data");
        let boundary = match b.take("vertex_table") {
            Some(t) => BoundarySpec::VertexTable(base.join(t)),
            None => BoundarySpec::Linear {
                a0: b.take_f64("a0", 0.0)?,
                a1: b.take_f64("a1", 0.0)?,
                a2: b.take_f64("a2", 0.0)?,
            },
        };
        b.finish()?;

        let mut s = Sect::new(ini, "solver");
        let solver = SolverConfig {
            newton_tol: s.take_f64("newton_tol", 1e-10)?,
            max_iter: s.take_usize("max_iter", 30)?,
            sigma_step: s.take_f64("sigma_step", 0.25)?,
            sigma_min_step: s.take_f64("sigma_min_step", 1e-4)?,
            growth: s.take_f64("growth", 2.0)?,
            backoff: s.take_f64("backoff", 0.5)?,
        };
        if !(solver.sigma_step > 0.0 && solver.sigma_min_step > 0.0 && solver.growth >= 1.0) {
            bail!("[solver] sigma schedule parameters must be positive");
        }
        s.finish()?;

        let mut t = Sect::new(ini, "tolerances");
        let tolerances = ToleranceConfig {
            tol_mono: t.take_f64("tol_mono", 1e-9)?,
            tol_serrin: t.take("tol_serrin").map(|v| v.parse::<f64>()).transpose()?,
            tol_ricci: t.take_f64("tol_ricci", 1e-9)?,
        };
        t.finish()?;

        let mut ba = Sect::new(ini, "barriers");
        let barriers = BarrierConfig {
            certify: ba.take_bool("certify", false)?,
            bounds: ba.take_bool("bounds", false)?,
            dichotomy: ba.take_bool("dichotomy", false)?,
            mu_pad: ba.take_f64("mu_pad", 1.0)?,
            tol_grad_factor: ba.take_f64("tol_grad_factor", 0.05)?,
        };
        ba.finish()?;

        let mut r = Sect::new(ini, "reference");
        let reference = match r.take("kind").as_deref() {
            None | Some("none") => {
                if r.take_bool("self_reference", false)? {
                    ReferenceSpec::SelfFinest
                } else {
                    ReferenceSpec::None
                }
            }
            Some("cap") => ReferenceSpec::Cap { radius: r.take_f64("radius", 1.0)? },
            Some("helicoid") => ReferenceSpec::Helicoid { c: r.take_f64("c", 2.0)? },
            Some("tilted_plane") => {
                ReferenceSpec::TiltedPlane { lambda: r.take_f64("lambda", 0.5)? }
            }
            Some(other) => bail!("[reference] unknown kind `{other}`"),
        };
        r.finish()?;

        let mut o = Sect::new(ini, "output");
        let out_dir = base.join(o.take("dir").unwrap_or_else(|| "out".into()));
        o.finish()?;

        Ok(RunConfig {
            geometry,
            domain,
            resolution,
            boundary_segments,
            curvature,
            boundary,
            solver,
            tolerances,
            barriers,
            reference,
            out_dir,
        })
    }
}

fn parse_pair(s: &str) -> Result<[f64; 2]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        bail!("expected `a, b`, got `{s}`");
    }
    Ok([parts[0].parse()?, parts[1].parse()?])
}
