//! Parameter sweeps over hole radius, hole depth and emitter position.
//!
//! Each row is one independent 3-D run. Rows are evaluated in parallel and
//! returned in specification order. A failed row keeps its status and the
//! remaining rows still run.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fdtd::{run_simulation, CouplingResult, SimulationConfig};
use crate::geometry::DeviceGeometry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    X,
    Y,
    Z,
}

impl Orientation {
    pub fn vector(self) -> [f64; 3] {
        match self {
            Orientation::X => [1.0, 0.0, 0.0],
            Orientation::Y => [0.0, 1.0, 0.0],
            Orientation::Z => [0.0, 0.0, 1.0],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Orientation::X => "x",
            Orientation::Y => "y",
            Orientation::Z => "z",
        }
    }
}

impl std::str::FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Orientation::X),
            "y" | "Y" => Ok(Orientation::Y),
            "z" | "Z" => Ok(Orientation::Z),
            _ => Err(Error::param("orientation", "must be x, y or z")),
        }
    }
}

/// What is swept. Lengths in nm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "parameter", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepAxis {
    HoleRadius { values: Vec<f64> },
    HoleDepth { values: Vec<f64> },
    /// Lateral emitter offsets from the hole axis; the map is `x × y`.
    EmitterPosition { x: Vec<f64>, y: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub orientations: Vec<Orientation>,
    #[serde(default = "desk_geometry")]
    pub base_geometry: DeviceGeometry,
    #[serde(default)]
    pub config: SimulationConfig,
}

/// Reduced domain used by the desk-scale defaults.
pub fn desk_geometry() -> DeviceGeometry {
    DeviceGeometry {
        domain_extent: [3000.0, 3000.0, 1500.0],
        substrate_depth: 700.0,
        ..DeviceGeometry::default()
    }
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, orientations: Vec<Orientation>) -> Self {
        Self {
            axis,
            orientations,
            base_geometry: desk_geometry(),
            config: SimulationConfig::default(),
        }
    }

    /// Seven radii over 0–75 nm.
    pub fn desk_radius() -> Self {
        let values = (0..7).map(|i| i as f64 * 12.5).collect();
        Self::new(
            SweepAxis::HoleRadius { values },
            vec![Orientation::X, Orientation::Y, Orientation::Z],
        )
    }

    /// Six depths over 0–100 nm.
    pub fn desk_depth() -> Self {
        let values = (0..6).map(|i| i as f64 * 20.0).collect();
        Self::new(
            SweepAxis::HoleDepth { values },
            vec![Orientation::X, Orientation::Y, Orientation::Z],
        )
    }

    /// 5 × 5 offsets inside a 25 nm hole.
    pub fn desk_position() -> Self {
        let v: Vec<f64> = vec![-12.0, -6.0, 0.0, 6.0, 12.0];
        Self::new(
            SweepAxis::EmitterPosition { x: v.clone(), y: v },
            vec![Orientation::Y],
        )
    }

    pub fn resolution(&self) -> f64 {
        self.config.cell_size
    }

    pub fn validate(&self) -> Result<()> {
        let increasing = |name: &'static str, v: &[f64]| -> Result<()> {
            if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::param(name, "values must be finite and strictly increasing"));
            }
            Ok(())
        };
        match &self.axis {
            SweepAxis::HoleRadius { values } | SweepAxis::HoleDepth { values } => {
                increasing("values", values)?
            }
            SweepAxis::EmitterPosition { x, y } => {
                increasing("x", x)?;
                increasing("y", y)?;
            }
        }
        let mut seen = Vec::new();
        for o in &self.orientations {
            if seen.contains(o) {
                return Err(Error::param("orientations", "duplicate orientation"));
            }
            seen.push(*o);
        }
        self.base_geometry.validate().into_result()
    }

    /// Geometries in row order: values outermost, orientations innermost.
    pub fn points(&self) -> Vec<(DeviceGeometry, Orientation)> {
        let base = &self.base_geometry;
        let mut geoms = Vec::new();
        match &self.axis {
            SweepAxis::HoleRadius { values } => {
                for &r in values {
                    geoms.push(DeviceGeometry {
                        hole_radius: r,
                        ..base.clone()
                    });
                }
            }
            SweepAxis::HoleDepth { values } => {
                for &d in values {
                    geoms.push(DeviceGeometry {
                        hole_depth: d,
                        ..base.clone()
                    });
                }
            }
            SweepAxis::EmitterPosition { x, y } => {
                for &px in x {
                    for &py in y {
                        let mut g = base.clone();
                        g.emitter_position[0] = px;
                        g.emitter_position[1] = py;
                        geoms.push(g);
                    }
                }
            }
        }
        geoms
            .into_iter()
            .flat_map(|g| {
                self.orientations
                    .iter()
                    .map(move |&o| (g.clone().with_orientation(o.vector()), o))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// Not simulated: the point violates a sweep precondition.
    Rejected(String),
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowMetrics {
    pub eta_wg: f64,
    pub eta_na: f64,
    pub eta_left: f64,
    pub eta_right: f64,
    pub p_left: f64,
    pub p_right: f64,
    pub p_total: f64,
    pub monitor_sum_fraction: f64,
}

impl From<&CouplingResult> for RowMetrics {
    fn from(r: &CouplingResult) -> Self {
        Self {
            eta_wg: r.eta_wg,
            eta_na: r.eta_na,
            eta_left: r.eta_left,
            eta_right: r.eta_right,
            p_left: r.p_left,
            p_right: r.p_right,
            p_total: r.p_total,
            monitor_sum_fraction: r.monitor_sum_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub hole_radius: f64,
    pub hole_depth: f64,
    pub emitter_x: f64,
    pub emitter_y: f64,
    pub orientation: Orientation,
    pub status: RowStatus,
    pub metrics: Option<RowMetrics>,
    pub cached: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn ok_rows(&self) -> impl Iterator<Item = (&SweepRow, &RowMetrics)> {
        self.rows.iter().filter_map(|r| r.metrics.as_ref().map(|m| (r, m)))
    }

    /// `(swept value, eta_wg)` for one orientation; 1-D sweeps only.
    pub fn curve(&self, o: Orientation) -> Vec<(f64, f64)> {
        let key = |r: &SweepRow| match self.spec.axis {
            SweepAxis::HoleDepth { .. } => r.hole_depth,
            _ => r.hole_radius,
        };
        self.ok_rows()
            .filter(|(r, _)| r.orientation == o)
            .map(|(r, m)| (key(r), m.eta_wg))
            .collect()
    }

    /// Largest `|eta_left(x, y) − eta_right(−x, y)|` relative to the mean
    /// single-sided efficiency, over map points whose mirror exists.
    pub fn mirror_deviation(&self, o: Orientation) -> Option<f64> {
        let rows: Vec<_> = self.ok_rows().filter(|(r, _)| r.orientation == o).collect();
        let mut worst: Option<f64> = None;
        for (r, m) in &rows {
            let mirror = rows.iter().find(|(q, _)| {
                (q.emitter_x + r.emitter_x).abs() < 1e-9 && (q.emitter_y - r.emitter_y).abs() < 1e-9
            });
            if let Some((_, mm)) = mirror {
                let scale = 0.5 * (m.eta_left + mm.eta_right);
                if scale > 0.0 {
                    let d = (m.eta_left - mm.eta_right).abs() / scale;
                    worst = Some(worst.map_or(d, |w| w.max(d)));
                }
            }
        }
        worst
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "hole_radius_nm,hole_depth_nm,emitter_x_nm,emitter_y_nm,orientation,status,\
             eta_wg,eta_na,eta_left,eta_right,p_left,p_right,p_total,monitor_sum_fraction"
        )?;
        for r in &self.rows {
            let status = match &r.status {
                RowStatus::Ok => "ok",
                RowStatus::Rejected(_) => "rejected",
                RowStatus::Failed(_) => "failed",
            };
            write!(
                w,
                "{},{},{},{},{},{}",
                r.hole_radius,
                r.hole_depth,
                r.emitter_x,
                r.emitter_y,
                r.orientation.label(),
                status
            )?;
            match &r.metrics {
                Some(m) => writeln!(
                    w,
                    ",{:.6},{:.6},{:.6},{:.6},{:.6e},{:.6e},{:.6e},{:.6}",
                    m.eta_wg,
                    m.eta_na,
                    m.eta_left,
                    m.eta_right,
                    m.p_left,
                    m.p_right,
                    m.p_total,
                    m.monitor_sum_fraction
                )?,
                None => writeln!(w, ",,,,,,,,")?,
            }
        }
        Ok(())
    }
}

/// Content hash of everything that determines a run.
pub fn cache_key(geometry: &DeviceGeometry, config: &SimulationConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(b"wgqd-coupling-v1\0");
    h.update(serde_json::to_vec(geometry)?);
    h.update([0]);
    h.update(serde_json::to_vec(config)?);
    Ok(hex::encode(h.finalize()))
}

/// Directory of cached [`CouplingResult`]s named by [`cache_key`].
#[derive(Clone, Debug)]
pub struct ResultCache {
    dir: PathBuf,
}

impl ResultCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Unreadable or stale entries count as misses.
    pub fn get(&self, key: &str) -> Option<CouplingResult> {
        let bytes = fs::read(self.path(key)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn put(&self, key: &str, result: &CouplingResult) -> Result<()> {
        let tmp = self.dir.join(format!("{key}.json.tmp"));
        fs::write(&tmp, serde_json::to_vec(result)?)?;
        fs::rename(tmp, self.path(key))?;
        Ok(())
    }
}

fn position_check(g: &DeviceGeometry) -> Option<String> {
    let [x, y, _] = g.emitter_position;
    let reach = x.hypot(y) + g.cqd_shell_radius;
    (reach > g.hole_radius).then(|| {
        format!(
            "emitter at ({x}, {y}) nm with shell radius {} nm leaves the {} nm hole",
            g.cqd_shell_radius, g.hole_radius
        )
    })
}

fn run_row(
    spec: &SweepSpec,
    geometry: DeviceGeometry,
    orientation: Orientation,
    cache: Option<&ResultCache>,
) -> SweepRow {
    let mut row = SweepRow {
        hole_radius: geometry.hole_radius,
        hole_depth: geometry.hole_depth,
        emitter_x: geometry.emitter_position[0],
        emitter_y: geometry.emitter_position[1],
        orientation,
        status: RowStatus::Ok,
        metrics: None,
        cached: false,
    };
    if matches!(spec.axis, SweepAxis::EmitterPosition { .. }) {
        if let Some(msg) = position_check(&geometry) {
            row.status = RowStatus::Rejected(msg);
            return row;
        }
    }
    if let Err(e) = geometry.validate().into_result() {
        row.status = RowStatus::Rejected(e.to_string());
        return row;
    }
    let key = match cache_key(&geometry, &spec.config) {
        Ok(k) => k,
        Err(e) => {
            row.status = RowStatus::Failed(e.to_string());
            return row;
        }
    };
    if let Some(hit) = cache.and_then(|c| c.get(&key)) {
        row.metrics = Some(RowMetrics::from(&hit));
        row.cached = true;
        return row;
    }
    match run_simulation(&geometry, &spec.config) {
        Ok(result) => {
            row.metrics = Some(RowMetrics::from(&result));
            if let Some(c) = cache {
                if let Err(e) = c.put(&key, &result) {
                    row.status = RowStatus::Failed(format!("cache write: {e}"));
                }
            }
        }
        Err(e) => row.status = RowStatus::Failed(e.to_string()),
    }
    row
}

/// Run every point of `spec`.
pub fn run_sweep(spec: &SweepSpec, cache: Option<&ResultCache>) -> Result<SweepResult> {
    spec.validate()?;
    let rows = spec
        .points()
        .into_par_iter()
        .map(|(g, o)| run_row(spec, g, o, cache))
        .collect();
    Ok(SweepResult {
        spec: spec.clone(),
        rows,
    })
}

fn expect_axis(spec: &SweepSpec, want: &str) -> Result<()> {
    let ok = matches!(
        (&spec.axis, want),
        (SweepAxis::HoleRadius { .. }, "hole_radius")
            | (SweepAxis::HoleDepth { .. }, "hole_depth")
            | (SweepAxis::EmitterPosition { .. }, "emitter_position")
    );
    if !ok {
        return Err(Error::param("axis", format!("expected a {want} sweep")));
    }
    Ok(())
}

pub fn sweep_radius(spec: &SweepSpec, cache: Option<&ResultCache>) -> Result<SweepResult> {
    expect_axis(spec, "hole_radius")?;
    run_sweep(spec, cache)
}

pub fn sweep_depth(spec: &SweepSpec, cache: Option<&ResultCache>) -> Result<SweepResult> {
    expect_axis(spec, "hole_depth")?;
    run_sweep(spec, cache)
}

pub fn sweep_position(spec: &SweepSpec, cache: Option<&ResultCache>) -> Result<SweepResult> {
    expect_axis(spec, "emitter_position")?;
    run_sweep(spec, cache)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sweep_is_empty() {
        let spec = SweepSpec::new(SweepAxis::HoleRadius { values: vec![] }, vec![Orientation::Y]);
        let r = sweep_radius(&spec, None).unwrap();
        assert!(r.rows.is_empty());
    }

    #[test]
    fn rejects_unsorted_values() {
        let spec = SweepSpec::new(
            SweepAxis::HoleDepth {
                values: vec![20.0, 10.0],
            },
            vec![Orientation::Y],
        );
        assert!(sweep_depth(&spec, None).is_err());
        assert!(sweep_radius(&SweepSpec::desk_depth(), None).is_err());
    }

    #[test]
    fn points_enumerate_values_then_orientations() {
        let p = SweepSpec::desk_radius().points();
        assert_eq!(p.len(), 21);
        assert_eq!(p[0].1, Orientation::X);
        assert_eq!(p[2].1, Orientation::Z);
        assert_eq!(p[3].0.hole_radius, 12.5);
        assert_eq!(p[4].0.dipole_orientation, [0.0, 1.0, 0.0]);
        assert_eq!(SweepSpec::desk_position().points().len(), 25);
    }

    #[test]
    fn outside_positions_are_rejected_without_running() {
        let spec = SweepSpec::new(
            SweepAxis::EmitterPosition {
                x: vec![30.0],
                y: vec![0.0],
            },
            vec![Orientation::Y],
        );
        let r = sweep_position(&spec, None).unwrap();
        assert!(matches!(r.rows[0].status, RowStatus::Rejected(_)));
        assert!(r.rows[0].metrics.is_none());
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().contains("rejected"));
    }

    #[test]
    fn cache_key_tracks_content() {
        let g = desk_geometry();
        let c = SimulationConfig::default();
        let k = cache_key(&g, &c).unwrap();
        assert_eq!(k, cache_key(&g.clone(), &c.clone()).unwrap());
        let g2 = DeviceGeometry {
            hole_radius: 26.0,
            ..g
        };
        assert_ne!(k, cache_key(&g2, &c).unwrap());
        assert_eq!(k.len(), 64);
    }
}
